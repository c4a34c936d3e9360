#pragma once

// Closed-form profile functions f(s): parsing, evaluation and exact
// symbolic differentiation.
//
// Grammar (whitespace insignificant, no implicit multiplication):
//   expr   := term (("+"|"-") term)*
//   term   := factor (("*"|"/") factor)*
//   factor := ("-")? power
//   power  := atom ("^" factor)?
//   atom   := number | "s" | "pi" | "e" | ident "(" expr ")" | "(" expr ")"

#include <cstddef>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>

namespace obata::expr {

enum class NodeKind { Number, Variable, Constant, Neg, Add, Sub, Mul, Div, Pow, Call };
enum class Function { Sin, Cos, Sinh, Cosh, Exp, Log, Sqrt, Tanh, Abs };
enum class NamedConstant { Pi, E };

/// Syntax error with the byte offset of the offending token.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t offset);
    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

/// Raised when a node evaluates outside its domain (log of a non-positive
/// number, a non-finite intermediate, ...). Distinct from ParseError.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

struct Node;

/// Immutable expression tree in the single variable s. Cheap to copy;
/// subtrees are shared.
class Expr {
public:
    Expr() = default;  // the zero literal

    static Expr number(double value);
    static Expr variable();
    static Expr constant(NamedConstant c);
    static Expr call(Function fn, Expr arg);

    friend Expr operator-(const Expr& a);
    friend Expr operator+(const Expr& a, const Expr& b);
    friend Expr operator-(const Expr& a, const Expr& b);
    friend Expr operator*(const Expr& a, const Expr& b);
    friend Expr operator/(const Expr& a, const Expr& b);
    friend Expr pow(const Expr& a, const Expr& b);

    double operator()(double s) const;

    NodeKind kind() const;
    const Node& node() const;

    /// True when the tree is a number literal (no s, no named constants).
    bool is_number(double* value = nullptr) const;
    bool depends_on_s() const;

private:
    explicit Expr(std::shared_ptr<const Node> n) : node_(std::move(n)) {}
    std::shared_ptr<const Node> node_;
    friend struct Node;
    friend Expr make(NodeKind, Expr, Expr);
};

struct Node {
    NodeKind kind = NodeKind::Number;
    double value = 0.0;
    Function fn = Function::Sin;
    NamedConstant constant = NamedConstant::Pi;
    Expr lhs;  // also the operand of Neg / Call
    Expr rhs;
};

Expr parse(std::string_view text);
double eval(const Expr& f, double s);
Expr differentiate(const Expr& f);

/// Fully parenthesized text that parse() maps back to a tree with
/// bit-identical evaluation.
std::string to_string(const Expr& f);

std::string_view function_name(Function fn);

}  // namespace obata::expr
