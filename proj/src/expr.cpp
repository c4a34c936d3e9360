#include "obata/expr.hpp"

#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <string>

namespace obata::expr {

ParseError::ParseError(const std::string& what, std::size_t offset)
    : std::runtime_error(what + " at offset " + std::to_string(offset)), offset_(offset) {}

namespace {

const Node& zero_node() {
    static const Node zero{};
    return zero;
}

constexpr std::array<std::pair<std::string_view, Function>, 9> kFunctions{{
    {"sin", Function::Sin},
    {"cos", Function::Cos},
    {"sinh", Function::Sinh},
    {"cosh", Function::Cosh},
    {"exp", Function::Exp},
    {"log", Function::Log},
    {"sqrt", Function::Sqrt},
    {"tanh", Function::Tanh},
    {"abs", Function::Abs},
}};

}  // namespace

Expr make(NodeKind kind, Expr lhs, Expr rhs) {
    auto n = std::make_shared<Node>();
    n->kind = kind;
    n->lhs = std::move(lhs);
    n->rhs = std::move(rhs);
    return Expr(std::move(n));
}

const Node& Expr::node() const { return node_ ? *node_ : zero_node(); }

NodeKind Expr::kind() const { return node().kind; }

Expr Expr::number(double value) {
    auto n = std::make_shared<Node>();
    n->kind = NodeKind::Number;
    n->value = value;
    return Expr(std::move(n));
}

Expr Expr::variable() {
    auto n = std::make_shared<Node>();
    n->kind = NodeKind::Variable;
    return Expr(std::move(n));
}

Expr Expr::constant(NamedConstant c) {
    auto n = std::make_shared<Node>();
    n->kind = NodeKind::Constant;
    n->constant = c;
    return Expr(std::move(n));
}

Expr Expr::call(Function fn, Expr arg) {
    auto n = std::make_shared<Node>();
    n->kind = NodeKind::Call;
    n->fn = fn;
    n->lhs = std::move(arg);
    return Expr(std::move(n));
}

bool Expr::is_number(double* value) const {
    if (kind() != NodeKind::Number) return false;
    if (value) *value = node().value;
    return true;
}

bool Expr::depends_on_s() const {
    const Node& n = node();
    switch (n.kind) {
        case NodeKind::Number:
        case NodeKind::Constant: return false;
        case NodeKind::Variable: return true;
        case NodeKind::Neg:
        case NodeKind::Call: return n.lhs.depends_on_s();
        default: return n.lhs.depends_on_s() || n.rhs.depends_on_s();
    }
}

// The arithmetic operators fold the trivial identities (x+0, 1*x, 0*x, ...)
// so that derivative trees stay readable. The parser builds raw nodes.

Expr operator-(const Expr& a) {
    double v;
    if (a.is_number(&v) && v == 0.0) return a;
    if (a.kind() == NodeKind::Neg) return a.node().lhs;
    return make(NodeKind::Neg, a, Expr());
}

Expr operator+(const Expr& a, const Expr& b) {
    double v;
    if (a.is_number(&v) && v == 0.0) return b;
    if (b.is_number(&v) && v == 0.0) return a;
    if (b.kind() == NodeKind::Neg) return make(NodeKind::Sub, a, b.node().lhs);
    return make(NodeKind::Add, a, b);
}

Expr operator-(const Expr& a, const Expr& b) {
    double v;
    if (b.is_number(&v) && v == 0.0) return a;
    if (a.is_number(&v) && v == 0.0) return -b;
    return make(NodeKind::Sub, a, b);
}

Expr operator*(const Expr& a, const Expr& b) {
    double v;
    if (a.is_number(&v) && v == 0.0) return a;
    if (b.is_number(&v) && v == 0.0) return b;
    if (a.is_number(&v) && v == 1.0) return b;
    if (b.is_number(&v) && v == 1.0) return a;
    if (a.kind() == NodeKind::Neg) return -(a.node().lhs * b);
    if (b.kind() == NodeKind::Neg) return -(a * b.node().lhs);
    return make(NodeKind::Mul, a, b);
}

Expr operator/(const Expr& a, const Expr& b) {
    double v;
    if (a.is_number(&v) && v == 0.0) return a;
    if (b.is_number(&v) && v == 1.0) return a;
    return make(NodeKind::Div, a, b);
}

Expr pow(const Expr& a, const Expr& b) {
    double v;
    if (b.is_number(&v) && v == 1.0) return a;
    if (b.is_number(&v) && v == 0.0) return Expr::number(1.0);
    return make(NodeKind::Pow, a, b);
}

std::string_view function_name(Function fn) {
    for (const auto& [name, f] : kFunctions)
        if (f == fn) return name;
    return "?";
}

// ---------------------------------------------------------------- parsing

namespace {

class Parser {
public:
    explicit Parser(std::string_view text) : text_(text) {}

    Expr run() {
        skip_ws();
        if (pos_ >= text_.size()) throw ParseError("empty expression", pos_);
        Expr e = parse_expr();
        skip_ws();
        if (pos_ < text_.size()) {
            if (text_[pos_] == ')') throw ParseError("unbalanced ')'", pos_);
            throw ParseError("unexpected trailing token '" + std::string(1, text_[pos_]) + "'", pos_);
        }
        return e;
    }

private:
    void skip_ws() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    }

    bool accept(char c) {
        skip_ws();
        if (pos_ < text_.size() && text_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    Expr parse_expr() {
        Expr lhs = parse_term();
        for (;;) {
            if (accept('+'))
                lhs = make(NodeKind::Add, lhs, parse_term());
            else if (accept('-'))
                lhs = make(NodeKind::Sub, lhs, parse_term());
            else
                return lhs;
        }
    }

    Expr parse_term() {
        Expr lhs = parse_factor();
        for (;;) {
            if (accept('*'))
                lhs = make(NodeKind::Mul, lhs, parse_factor());
            else if (accept('/'))
                lhs = make(NodeKind::Div, lhs, parse_factor());
            else
                return lhs;
        }
    }

    Expr parse_factor() {
        if (accept('-')) return make(NodeKind::Neg, parse_power(), Expr());
        return parse_power();
    }

    Expr parse_power() {
        Expr base = parse_atom();
        if (accept('^')) return make(NodeKind::Pow, base, parse_factor());
        return base;
    }

    Expr parse_atom() {
        skip_ws();
        if (pos_ >= text_.size()) throw ParseError("unexpected end of input", pos_);
        const char c = text_[pos_];
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
        if (c == '(') {
            const std::size_t open = pos_++;
            skip_ws();
            if (pos_ < text_.size() && text_[pos_] == ')') throw ParseError("empty parentheses", pos_);
            Expr inner = parse_expr();
            if (!accept(')')) throw ParseError("unbalanced '(' opened", open);
            return inner;
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return parse_identifier();
        throw ParseError("unexpected token '" + std::string(1, c) + "'", pos_);
    }

    Expr parse_number() {
        const std::size_t start = pos_;
        auto digits = [&] {
            std::size_t n = 0;
            while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_, ++n;
            return n;
        };
        std::size_t n = digits();
        if (pos_ < text_.size() && text_[pos_] == '.') {
            ++pos_;
            n += digits();
        }
        if (n == 0) throw ParseError("malformed number", start);
        // An exponent is only consumed when digits follow, so "2e" stays an error
        // (implicit multiplication) rather than a malformed literal.
        if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
            std::size_t look = pos_ + 1;
            if (look < text_.size() && (text_[look] == '+' || text_[look] == '-')) ++look;
            if (look < text_.size() && std::isdigit(static_cast<unsigned char>(text_[look]))) {
                pos_ = look;
                digits();
            }
        }
        double value = 0.0;
        const auto res = std::from_chars(text_.data() + start, text_.data() + pos_, value);
        if (res.ec != std::errc() || res.ptr != text_.data() + pos_)
            throw ParseError("malformed number", start);
        return Expr::number(value);
    }

    Expr parse_identifier() {
        const std::size_t start = pos_;
        while (pos_ < text_.size() &&
               (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
            ++pos_;
        const std::string_view name = text_.substr(start, pos_ - start);
        if (name == "s") return Expr::variable();
        if (name == "pi") return Expr::constant(NamedConstant::Pi);
        if (name == "e") return Expr::constant(NamedConstant::E);
        for (const auto& [fname, fn] : kFunctions) {
            if (fname != name) continue;
            skip_ws();
            if (pos_ >= text_.size() || text_[pos_] != '(')
                throw ParseError("function '" + std::string(name) + "' requires parentheses", pos_);
            const std::size_t open = pos_++;
            skip_ws();
            if (pos_ < text_.size() && text_[pos_] == ')') throw ParseError("empty argument", pos_);
            Expr arg = parse_expr();
            if (!accept(')')) throw ParseError("unbalanced '(' opened", open);
            return Expr::call(fn, arg);
        }
        throw ParseError("unknown identifier '" + std::string(name) + "'", start);
    }

    std::string_view text_;
    std::size_t pos_ = 0;
};

}  // namespace

Expr parse(std::string_view text) { return Parser(text).run(); }

// ------------------------------------------------------------- evaluation

namespace {

double checked(double v, const char* what) {
    if (!std::isfinite(v)) throw DomainError(std::string("non-finite result in ") + what);
    return v;
}

double apply(Function fn, double x) {
    switch (fn) {
        case Function::Sin: return std::sin(x);
        case Function::Cos: return std::cos(x);
        case Function::Sinh: return checked(std::sinh(x), "sinh");
        case Function::Cosh: return checked(std::cosh(x), "cosh");
        case Function::Exp: return checked(std::exp(x), "exp");
        case Function::Log:
            if (!(x > 0.0)) throw DomainError("log of non-positive argument");
            return std::log(x);
        case Function::Sqrt:
            if (x < 0.0) throw DomainError("sqrt of negative argument");
            return std::sqrt(x);
        case Function::Tanh: return std::tanh(x);
        case Function::Abs: return std::fabs(x);
    }
    return 0.0;
}

}  // namespace

double eval(const Expr& f, double s) {
    const Node& n = f.node();
    switch (n.kind) {
        case NodeKind::Number: return n.value;
        case NodeKind::Variable: return s;
        case NodeKind::Constant: return n.constant == NamedConstant::Pi ? std::numbers::pi : std::numbers::e;
        case NodeKind::Neg: return -eval(n.lhs, s);
        case NodeKind::Add: return checked(eval(n.lhs, s) + eval(n.rhs, s), "+");
        case NodeKind::Sub: return checked(eval(n.lhs, s) - eval(n.rhs, s), "-");
        case NodeKind::Mul: return checked(eval(n.lhs, s) * eval(n.rhs, s), "*");
        case NodeKind::Div: {
            const double den = eval(n.rhs, s);
            if (den == 0.0) throw DomainError("division by zero");
            return checked(eval(n.lhs, s) / den, "/");
        }
        case NodeKind::Pow: {
            const double base = eval(n.lhs, s);
            const double ex = eval(n.rhs, s);
            if (base < 0.0 && ex != std::floor(ex)) throw DomainError("negative base with non-integer exponent");
            if (base == 0.0 && ex < 0.0) throw DomainError("zero base with negative exponent");
            return checked(std::pow(base, ex), "^");
        }
        case NodeKind::Call: return apply(n.fn, eval(n.lhs, s));
    }
    return 0.0;
}

double Expr::operator()(double s) const { return eval(*this, s); }

// --------------------------------------------------------- differentiation

Expr differentiate(const Expr& f) {
    const Node& n = f.node();
    const Expr one = Expr::number(1.0);
    switch (n.kind) {
        case NodeKind::Number:
        case NodeKind::Constant: return Expr::number(0.0);
        case NodeKind::Variable: return one;
        case NodeKind::Neg: return -differentiate(n.lhs);
        case NodeKind::Add: return differentiate(n.lhs) + differentiate(n.rhs);
        case NodeKind::Sub: return differentiate(n.lhs) - differentiate(n.rhs);
        case NodeKind::Mul:
            return differentiate(n.lhs) * n.rhs + n.lhs * differentiate(n.rhs);
        case NodeKind::Div: {
            const Expr& a = n.lhs;
            const Expr& b = n.rhs;
            return (differentiate(a) * b - a * differentiate(b)) / pow(b, Expr::number(2.0));
        }
        case NodeKind::Pow: {
            const Expr& a = n.lhs;
            const Expr& b = n.rhs;
            const Expr da = differentiate(a);
            if (!b.depends_on_s()) {
                double bv;
                const Expr reduced = b.is_number(&bv) ? Expr::number(bv - 1.0) : b - one;
                return b * pow(a, reduced) * da;
            }
            const Expr db = differentiate(b);
            return f * (db * Expr::call(Function::Log, a) + b * da / a);
        }
        case NodeKind::Call: {
            const Expr& a = n.lhs;
            const Expr da = differentiate(a);
            switch (n.fn) {
                case Function::Sin: return Expr::call(Function::Cos, a) * da;
                case Function::Cos: return -(Expr::call(Function::Sin, a) * da);
                case Function::Sinh: return Expr::call(Function::Cosh, a) * da;
                case Function::Cosh: return Expr::call(Function::Sinh, a) * da;
                case Function::Exp: return f * da;
                case Function::Log: return da / a;
                case Function::Sqrt: return da / (Expr::number(2.0) * f);
                case Function::Tanh: return (one - pow(f, Expr::number(2.0))) * da;
                // sign(a) = a/|a|; evaluating at a kink raises DomainError.
                case Function::Abs: return a / f * da;
            }
        }
    }
    return Expr::number(0.0);
}

// ---------------------------------------------------------------- printing

namespace {

std::string format_number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", std::fabs(v));
    std::string out = buf;
    if (std::signbit(v)) return "(-" + out + ")";
    return out;
}

void print(const Expr& f, std::string& out) {
    const Node& n = f.node();
    auto binary = [&](char op) {
        out += '(';
        print(n.lhs, out);
        out += op;
        print(n.rhs, out);
        out += ')';
    };
    switch (n.kind) {
        case NodeKind::Number: out += format_number(n.value); break;
        case NodeKind::Variable: out += 's'; break;
        case NodeKind::Constant: out += n.constant == NamedConstant::Pi ? "pi" : "e"; break;
        case NodeKind::Neg:
            out += "(-";
            print(n.lhs, out);
            out += ')';
            break;
        case NodeKind::Add: binary('+'); break;
        case NodeKind::Sub: binary('-'); break;
        case NodeKind::Mul: binary('*'); break;
        case NodeKind::Div: binary('/'); break;
        case NodeKind::Pow: binary('^'); break;
        case NodeKind::Call:
            out += function_name(n.fn);
            out += '(';
            print(n.lhs, out);
            out += ')';
            break;
    }
}

}  // namespace

std::string to_string(const Expr& f) {
    std::string out;
    print(f, out);
    return out;
}

}  // namespace obata::expr
