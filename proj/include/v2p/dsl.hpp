#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "v2p/common.hpp"

namespace v2p {

enum class ValueType { Scalar, Vec2, Vec3, Vec4, Bool };

int value_dim(ValueType t);               // Scalar -> 1, VecN -> N, Bool -> 1
ValueType vec_type(int dim);              // 1 -> Scalar, 2..4 -> VecN
std::string value_type_name(ValueType t);

enum class UnOp { Neg, Not };
enum class BinOp { Add, Sub, Mul, Div };
enum class CmpOp { Lt, Gt, Le, Ge };
enum class BoolOp { And, Or };
enum class Fn { Norm, Tanh, Exp, Abs, Sqrt, Min, Max, Dot, Clamp };

int fn_arity(Fn f);
const char* fn_name(Fn f);

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

// Immutable AST node. Children in `args`; payload fields used per kind.
struct Expr {
  enum class Kind { Constant, Feature, Unary, Binary, Compare, Logic, Call, Index, Slice } kind;

  double constant = 0.0;      // Constant (non-negative by construction from the parser)
  std::string obj, field;     // Feature: obj may be empty for a bare identifier
  UnOp un_op{};
  BinOp bin_op{};
  CmpOp cmp_op{};
  BoolOp bool_op{};
  Fn fn{};
  int index_lo = 0, index_hi = 0;  // Index uses lo; Slice uses [lo, hi)
  std::vector<ExprPtr> args;

  size_t src_begin = 0, src_end = 0;  // byte span in the source text, when parsed

  static ExprPtr make_constant(double v);
  static ExprPtr make_feature(std::string obj, std::string field);
  static ExprPtr make_unary(UnOp op, ExprPtr e);
  static ExprPtr make_binary(BinOp op, ExprPtr l, ExprPtr r);
  static ExprPtr make_compare(CmpOp op, ExprPtr l, ExprPtr r);
  static ExprPtr make_logic(BoolOp op, ExprPtr l, ExprPtr r);
  static ExprPtr make_call(Fn f, std::vector<ExprPtr> args);
  static ExprPtr make_index(ExprPtr e, int k);
  static ExprPtr make_slice(ExprPtr e, int lo, int hi);

  std::string feature_key() const { return obj.empty() ? field : obj + "." + field; }
};

bool expr_equal(const Expr& a, const Expr& b);

// Syntax error with the byte offset of the offending token and what was
// expected there.
struct ParseError : InputError {
  size_t offset;
  std::string expected;
  ParseError(size_t off, std::string exp, const std::string& found)
      : InputError("syntax error at offset " + std::to_string(off) + ": expected " + exp +
                   ", found " + found),
        offset(off),
        expected(std::move(exp)) {}
};

// Type error carrying the source span of the offending node.
struct TypeError : InputError {
  size_t begin, end;
  TypeError(const Expr& node, const std::string& what)
      : InputError("type error at [" + std::to_string(node.src_begin) + ", " +
                   std::to_string(node.src_end) + "): " + what),
        begin(node.src_begin),
        end(node.src_end) {}
};

// Grammar:
//   expr    := or
//   or      := and ('|' and)*
//   and     := cmp ('&' cmp)*
//   cmp     := add (('<' | '>' | '<=' | '>=') add)?
//   add     := mul (('+' | '-') mul)*
//   mul     := unary (('*' | '/') unary)*
//   unary   := '-' unary | '!' unary | postfix
//   postfix := primary ('[' INT (':' INT)? ']')*
//   primary := NUMBER | IDENT ('.' IDENT)? | FN '(' expr (',' expr)* ')' | '(' expr ')'
ExprPtr parse_expr(const std::string& text);

// Canonical text with minimal parentheses; parse(print(x)) reproduces x for
// any AST the parser can produce. Floats use shortest round-trip form.
std::string print_expr(const Expr& e);

// Feature name ("obj.field" or bare name) -> type.
using FeatureTypes = std::map<std::string, ValueType>;

ValueType typecheck(const Expr& e, const FeatureTypes& features);

}  // namespace v2p
