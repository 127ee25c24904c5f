#include "v2p/dsl.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstring>

#include "v2p/binio.hpp"

namespace v2p {

int value_dim(ValueType t) {
  switch (t) {
    case ValueType::Scalar:
    case ValueType::Bool:
      return 1;
    case ValueType::Vec2:
      return 2;
    case ValueType::Vec3:
      return 3;
    case ValueType::Vec4:
      return 4;
  }
  return 1;
}

ValueType vec_type(int dim) {
  switch (dim) {
    case 1:
      return ValueType::Scalar;
    case 2:
      return ValueType::Vec2;
    case 3:
      return ValueType::Vec3;
    case 4:
      return ValueType::Vec4;
  }
  throw ContractError("vec_type: dimension out of range");
}

std::string value_type_name(ValueType t) {
  switch (t) {
    case ValueType::Scalar:
      return "scalar";
    case ValueType::Vec2:
      return "vec2";
    case ValueType::Vec3:
      return "vec3";
    case ValueType::Vec4:
      return "vec4";
    case ValueType::Bool:
      return "bool";
  }
  return "?";
}

int fn_arity(Fn f) {
  switch (f) {
    case Fn::Norm:
    case Fn::Tanh:
    case Fn::Exp:
    case Fn::Abs:
    case Fn::Sqrt:
      return 1;
    case Fn::Min:
    case Fn::Max:
    case Fn::Dot:
      return 2;
    case Fn::Clamp:
      return 3;
  }
  return 0;
}

const char* fn_name(Fn f) {
  switch (f) {
    case Fn::Norm:
      return "norm";
    case Fn::Tanh:
      return "tanh";
    case Fn::Exp:
      return "exp";
    case Fn::Abs:
      return "abs";
    case Fn::Sqrt:
      return "sqrt";
    case Fn::Min:
      return "min";
    case Fn::Max:
      return "max";
    case Fn::Dot:
      return "dot";
    case Fn::Clamp:
      return "clamp";
  }
  return "?";
}

static ExprPtr make_node(Expr e) { return std::make_shared<const Expr>(std::move(e)); }

ExprPtr Expr::make_constant(double v) {
  Expr e;
  e.kind = Kind::Constant;
  e.constant = v;
  return make_node(std::move(e));
}
ExprPtr Expr::make_feature(std::string obj, std::string field) {
  Expr e;
  e.kind = Kind::Feature;
  e.obj = std::move(obj);
  e.field = std::move(field);
  return make_node(std::move(e));
}
ExprPtr Expr::make_unary(UnOp op, ExprPtr c) {
  Expr e;
  e.kind = Kind::Unary;
  e.un_op = op;
  e.args = {std::move(c)};
  return make_node(std::move(e));
}
ExprPtr Expr::make_binary(BinOp op, ExprPtr l, ExprPtr r) {
  Expr e;
  e.kind = Kind::Binary;
  e.bin_op = op;
  e.args = {std::move(l), std::move(r)};
  return make_node(std::move(e));
}
ExprPtr Expr::make_compare(CmpOp op, ExprPtr l, ExprPtr r) {
  Expr e;
  e.kind = Kind::Compare;
  e.cmp_op = op;
  e.args = {std::move(l), std::move(r)};
  return make_node(std::move(e));
}
ExprPtr Expr::make_logic(BoolOp op, ExprPtr l, ExprPtr r) {
  Expr e;
  e.kind = Kind::Logic;
  e.bool_op = op;
  e.args = {std::move(l), std::move(r)};
  return make_node(std::move(e));
}
ExprPtr Expr::make_call(Fn f, std::vector<ExprPtr> args) {
  Expr e;
  e.kind = Kind::Call;
  e.fn = f;
  e.args = std::move(args);
  return make_node(std::move(e));
}
ExprPtr Expr::make_index(ExprPtr c, int k) {
  Expr e;
  e.kind = Kind::Index;
  e.index_lo = k;
  e.args = {std::move(c)};
  return make_node(std::move(e));
}
ExprPtr Expr::make_slice(ExprPtr c, int lo, int hi) {
  Expr e;
  e.kind = Kind::Slice;
  e.index_lo = lo;
  e.index_hi = hi;
  e.args = {std::move(c)};
  return make_node(std::move(e));
}

bool expr_equal(const Expr& a, const Expr& b) {
  if (a.kind != b.kind || a.args.size() != b.args.size()) return false;
  switch (a.kind) {
    case Expr::Kind::Constant:
      // Bit-level equality keeps the round-trip property exact (-0.0 != 0.0
      // would round-trip anyway, but NaN never parses).
      if (a.constant != b.constant) return false;
      break;
    case Expr::Kind::Feature:
      if (a.obj != b.obj || a.field != b.field) return false;
      break;
    case Expr::Kind::Unary:
      if (a.un_op != b.un_op) return false;
      break;
    case Expr::Kind::Binary:
      if (a.bin_op != b.bin_op) return false;
      break;
    case Expr::Kind::Compare:
      if (a.cmp_op != b.cmp_op) return false;
      break;
    case Expr::Kind::Logic:
      if (a.bool_op != b.bool_op) return false;
      break;
    case Expr::Kind::Call:
      if (a.fn != b.fn) return false;
      break;
    case Expr::Kind::Index:
      if (a.index_lo != b.index_lo) return false;
      break;
    case Expr::Kind::Slice:
      if (a.index_lo != b.index_lo || a.index_hi != b.index_hi) return false;
      break;
  }
  for (size_t k = 0; k < a.args.size(); ++k) {
    if (!expr_equal(*a.args[k], *b.args[k])) return false;
  }
  return true;
}

// --- parser -----------------------------------------------------------------

namespace {

struct Token {
  enum class Kind { Number, Ident, Op, End } kind;
  size_t begin = 0, end = 0;
  double number = 0.0;
  std::string text;
};

class Lexer {
 public:
  explicit Lexer(const std::string& s) : s_(s) { advance(); }

  const Token& peek() const { return tok_; }

  Token take() {
    Token t = tok_;
    advance();
    return t;
  }

 private:
  void advance() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    tok_ = Token{};
    tok_.begin = pos_;
    if (pos_ >= s_.size()) {
      tok_.kind = Token::Kind::End;
      tok_.end = pos_;
      tok_.text = "end of input";
      return;
    }
    const char c = s_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) ||
        (c == '.' && pos_ + 1 < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_ + 1])))) {
      double value = 0.0;
      const char* first = s_.data() + pos_;
      const char* last = s_.data() + s_.size();
      auto res = std::from_chars(first, last, value);
      if (res.ec != std::errc()) throw ParseError(pos_, "number", std::string(1, c));
      tok_.kind = Token::Kind::Number;
      tok_.number = value;
      pos_ = static_cast<size_t>(res.ptr - s_.data());
      tok_.end = pos_;
      tok_.text = s_.substr(tok_.begin, tok_.end - tok_.begin);
      return;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      size_t e = pos_;
      while (e < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[e])) || s_[e] == '_')) ++e;
      tok_.kind = Token::Kind::Ident;
      tok_.text = s_.substr(pos_, e - pos_);
      pos_ = e;
      tok_.end = e;
      return;
    }
    static const char* two_char_ops[] = {"<=", ">="};
    for (const char* op : two_char_ops) {
      if (s_.compare(pos_, 2, op) == 0) {
        tok_.kind = Token::Kind::Op;
        tok_.text = op;
        pos_ += 2;
        tok_.end = pos_;
        return;
      }
    }
    if (std::strchr("+-*/()[]:,<>&|!.", c)) {
      tok_.kind = Token::Kind::Op;
      tok_.text = std::string(1, c);
      ++pos_;
      tok_.end = pos_;
      return;
    }
    throw ParseError(pos_, "a token", std::string(1, c));
  }

  const std::string& s_;
  size_t pos_ = 0;
  Token tok_;
};

class Parser {
 public:
  explicit Parser(const std::string& s) : lex_(s) {}

  ExprPtr parse() {
    ExprPtr e = parse_or();
    expect_end();
    return e;
  }

 private:
  Lexer lex_;

  [[noreturn]] void fail(const std::string& expected) {
    const Token& t = lex_.peek();
    throw ParseError(t.begin, expected, t.text.empty() ? "?" : t.text);
  }

  bool peek_op(const char* op) {
    return lex_.peek().kind == Token::Kind::Op && lex_.peek().text == op;
  }

  void expect_op(const char* op) {
    if (!peek_op(op)) fail(std::string("'") + op + "'");
    lex_.take();
  }

  void expect_end() {
    if (lex_.peek().kind != Token::Kind::End) fail("end of expression");
  }

  static ExprPtr with_span(ExprPtr e, size_t b, size_t en) {
    Expr copy = *e;
    copy.src_begin = b;
    copy.src_end = en;
    return std::make_shared<const Expr>(std::move(copy));
  }

  ExprPtr parse_or() {
    size_t b = lex_.peek().begin;
    ExprPtr e = parse_and();
    while (peek_op("|")) {
      lex_.take();
      ExprPtr r = parse_and();
      size_t en = r->src_end;
      e = with_span(Expr::make_logic(BoolOp::Or, e, r), b, en);
    }
    return e;
  }

  ExprPtr parse_and() {
    size_t b = lex_.peek().begin;
    ExprPtr e = parse_cmp();
    while (peek_op("&")) {
      lex_.take();
      ExprPtr r = parse_cmp();
      size_t en = r->src_end;
      e = with_span(Expr::make_logic(BoolOp::And, e, r), b, en);
    }
    return e;
  }

  ExprPtr parse_cmp() {
    size_t b = lex_.peek().begin;
    ExprPtr e = parse_add();
    CmpOp op;
    if (peek_op("<"))
      op = CmpOp::Lt;
    else if (peek_op(">"))
      op = CmpOp::Gt;
    else if (peek_op("<="))
      op = CmpOp::Le;
    else if (peek_op(">="))
      op = CmpOp::Ge;
    else
      return e;
    lex_.take();
    ExprPtr r = parse_add();
    return with_span(Expr::make_compare(op, e, r), b, r->src_end);
  }

  ExprPtr parse_add() {
    size_t b = lex_.peek().begin;
    ExprPtr e = parse_mul();
    while (peek_op("+") || peek_op("-")) {
      const BinOp op = peek_op("+") ? BinOp::Add : BinOp::Sub;
      lex_.take();
      ExprPtr r = parse_mul();
      e = with_span(Expr::make_binary(op, e, r), b, r->src_end);
    }
    return e;
  }

  ExprPtr parse_mul() {
    size_t b = lex_.peek().begin;
    ExprPtr e = parse_unary();
    while (peek_op("*") || peek_op("/")) {
      const BinOp op = peek_op("*") ? BinOp::Mul : BinOp::Div;
      lex_.take();
      ExprPtr r = parse_unary();
      e = with_span(Expr::make_binary(op, e, r), b, r->src_end);
    }
    return e;
  }

  ExprPtr parse_unary() {
    size_t b = lex_.peek().begin;
    if (peek_op("-")) {
      lex_.take();
      ExprPtr c = parse_unary();
      return with_span(Expr::make_unary(UnOp::Neg, c), b, c->src_end);
    }
    if (peek_op("!")) {
      lex_.take();
      ExprPtr c = parse_unary();
      return with_span(Expr::make_unary(UnOp::Not, c), b, c->src_end);
    }
    return parse_postfix();
  }

  int expect_int() {
    const Token& t = lex_.peek();
    if (t.kind != Token::Kind::Number) fail("integer");
    double v = t.number;
    if (v != std::floor(v) || v < 0 || v > 1e9) fail("non-negative integer");
    lex_.take();
    return static_cast<int>(v);
  }

  ExprPtr parse_postfix() {
    size_t b = lex_.peek().begin;
    ExprPtr e = parse_primary();
    while (peek_op("[")) {
      lex_.take();
      const int lo = expect_int();
      if (peek_op(":")) {
        lex_.take();
        const int hi = expect_int();
        size_t en = lex_.peek().end;
        expect_op("]");
        e = with_span(Expr::make_slice(e, lo, hi), b, en);
      } else {
        size_t en = lex_.peek().end;
        expect_op("]");
        e = with_span(Expr::make_index(e, lo), b, en);
      }
    }
    return e;
  }

  ExprPtr parse_primary() {
    const Token t = lex_.peek();
    if (t.kind == Token::Kind::Number) {
      lex_.take();
      return with_span(Expr::make_constant(t.number), t.begin, t.end);
    }
    if (t.kind == Token::Kind::Ident) {
      lex_.take();
      if (peek_op("(")) {
        Fn fn;
        if (t.text == "norm")
          fn = Fn::Norm;
        else if (t.text == "tanh")
          fn = Fn::Tanh;
        else if (t.text == "exp")
          fn = Fn::Exp;
        else if (t.text == "abs")
          fn = Fn::Abs;
        else if (t.text == "sqrt")
          fn = Fn::Sqrt;
        else if (t.text == "min")
          fn = Fn::Min;
        else if (t.text == "max")
          fn = Fn::Max;
        else if (t.text == "dot")
          fn = Fn::Dot;
        else if (t.text == "clamp")
          fn = Fn::Clamp;
        else
          throw ParseError(t.begin, "a function name (norm, tanh, exp, abs, sqrt, min, max, dot, clamp)",
                           t.text);
        lex_.take();  // '('
        std::vector<ExprPtr> args;
        args.push_back(parse_or());
        while (peek_op(",")) {
          lex_.take();
          args.push_back(parse_or());
        }
        size_t en = lex_.peek().end;
        expect_op(")");
        if (static_cast<int>(args.size()) != fn_arity(fn))
          throw ParseError(t.begin,
                           std::string(fn_name(fn)) + " with " + std::to_string(fn_arity(fn)) +
                               " argument(s)",
                           std::to_string(args.size()) + " argument(s)");
        return with_span(Expr::make_call(fn, std::move(args)), t.begin, en);
      }
      if (peek_op(".")) {
        lex_.take();
        const Token f = lex_.peek();
        if (f.kind != Token::Kind::Ident) fail("field name after '.'");
        lex_.take();
        return with_span(Expr::make_feature(t.text, f.text), t.begin, f.end);
      }
      // Bare identifier: kept as a feature reference; the typechecker decides
      // whether it resolves.
      return with_span(Expr::make_feature("", t.text), t.begin, t.end);
    }
    if (t.kind == Token::Kind::Op && t.text == "(") {
      lex_.take();
      ExprPtr e = parse_or();
      expect_op(")");
      return e;
    }
    fail("an expression");
  }
};

}  // namespace

ExprPtr parse_expr(const std::string& text) { return Parser(text).parse(); }

// --- printer ----------------------------------------------------------------

namespace {

// Higher binds tighter.
int precedence(const Expr& e) {
  switch (e.kind) {
    case Expr::Kind::Logic:
      return e.bool_op == BoolOp::Or ? 1 : 2;
    case Expr::Kind::Compare:
      return 3;
    case Expr::Kind::Binary:
      return (e.bin_op == BinOp::Add || e.bin_op == BinOp::Sub) ? 4 : 5;
    case Expr::Kind::Unary:
      return 6;
    case Expr::Kind::Index:
    case Expr::Kind::Slice:
      return 7;
    default:
      return 8;
  }
}

void print_rec(const Expr& e, std::string& out);

void print_child(const Expr& child, int parent_prec, bool is_right, std::string& out) {
  const int cp = precedence(child);
  // Strictly left-associative grammar: a right child at equal precedence
  // needs parentheses to reproduce the same tree.
  const bool parens = cp < parent_prec || (cp == parent_prec && is_right);
  if (parens) out += "(";
  print_rec(child, out);
  if (parens) out += ")";
}

void print_rec(const Expr& e, std::string& out) {
  switch (e.kind) {
    case Expr::Kind::Constant:
      out += format_double(e.constant);
      break;
    case Expr::Kind::Feature:
      out += e.feature_key();
      break;
    case Expr::Kind::Unary: {
      out += (e.un_op == UnOp::Neg) ? "-" : "!";
      const int cp = precedence(*e.args[0]);
      const bool parens = cp < precedence(e);
      if (parens) out += "(";
      print_rec(*e.args[0], out);
      if (parens) out += ")";
      break;
    }
    case Expr::Kind::Binary: {
      const int p = precedence(e);
      print_child(*e.args[0], p, false, out);
      switch (e.bin_op) {
        case BinOp::Add:
          out += " + ";
          break;
        case BinOp::Sub:
          out += " - ";
          break;
        case BinOp::Mul:
          out += " * ";
          break;
        case BinOp::Div:
          out += " / ";
          break;
      }
      print_child(*e.args[1], p, true, out);
      break;
    }
    case Expr::Kind::Compare: {
      const int p = precedence(e);
      // Comparison is non-associative: both children need parens at equal
      // precedence (a compare child cannot re-parse unparenthesized).
      print_child(*e.args[0], p + 1, false, out);
      switch (e.cmp_op) {
        case CmpOp::Lt:
          out += " < ";
          break;
        case CmpOp::Gt:
          out += " > ";
          break;
        case CmpOp::Le:
          out += " <= ";
          break;
        case CmpOp::Ge:
          out += " >= ";
          break;
      }
      print_child(*e.args[1], p + 1, false, out);
      break;
    }
    case Expr::Kind::Logic: {
      const int p = precedence(e);
      print_child(*e.args[0], p, false, out);
      out += (e.bool_op == BoolOp::And) ? " & " : " | ";
      print_child(*e.args[1], p, true, out);
      break;
    }
    case Expr::Kind::Call: {
      out += fn_name(e.fn);
      out += "(";
      for (size_t k = 0; k < e.args.size(); ++k) {
        if (k) out += ", ";
        print_rec(*e.args[k], out);
      }
      out += ")";
      break;
    }
    case Expr::Kind::Index: {
      print_child(*e.args[0], precedence(e), false, out);
      out += "[" + std::to_string(e.index_lo) + "]";
      break;
    }
    case Expr::Kind::Slice: {
      print_child(*e.args[0], precedence(e), false, out);
      out += "[" + std::to_string(e.index_lo) + ":" + std::to_string(e.index_hi) + "]";
      break;
    }
  }
}

}  // namespace

std::string print_expr(const Expr& e) {
  std::string out;
  print_rec(e, out);
  return out;
}

// --- typechecker -------------------------------------------------------------

ValueType typecheck(const Expr& e, const FeatureTypes& features) {
  switch (e.kind) {
    case Expr::Kind::Constant:
      return ValueType::Scalar;
    case Expr::Kind::Feature: {
      auto it = features.find(e.feature_key());
      if (it == features.end()) throw TypeError(e, "unknown feature '" + e.feature_key() + "'");
      return it->second;
    }
    case Expr::Kind::Unary: {
      const ValueType t = typecheck(*e.args[0], features);
      if (e.un_op == UnOp::Neg) {
        if (t == ValueType::Bool) throw TypeError(e, "cannot negate a boolean arithmetically");
        return t;
      }
      if (t != ValueType::Bool) throw TypeError(e, "'!' requires a boolean operand");
      return ValueType::Bool;
    }
    case Expr::Kind::Binary: {
      const ValueType lt = typecheck(*e.args[0], features);
      const ValueType rt = typecheck(*e.args[1], features);
      if (lt == ValueType::Bool || rt == ValueType::Bool)
        throw TypeError(e, "boolean used arithmetically");
      if (lt == rt) return lt;
      if (lt == ValueType::Scalar) return rt;  // scalar broadcast
      if (rt == ValueType::Scalar) return lt;
      throw TypeError(e, "dimension mismatch: " + value_type_name(lt) + " vs " + value_type_name(rt));
    }
    case Expr::Kind::Compare: {
      const ValueType lt = typecheck(*e.args[0], features);
      const ValueType rt = typecheck(*e.args[1], features);
      if (lt != ValueType::Scalar || rt != ValueType::Scalar)
        throw TypeError(e, "comparison requires scalar operands");
      return ValueType::Bool;
    }
    case Expr::Kind::Logic: {
      const ValueType lt = typecheck(*e.args[0], features);
      const ValueType rt = typecheck(*e.args[1], features);
      if (lt != ValueType::Bool || rt != ValueType::Bool)
        throw TypeError(e, "boolean operator requires boolean operands");
      return ValueType::Bool;
    }
    case Expr::Kind::Call: {
      std::vector<ValueType> ts;
      for (const auto& a : e.args) ts.push_back(typecheck(*a, features));
      auto require_scalar = [&](size_t k) {
        if (ts[k] != ValueType::Scalar)
          throw TypeError(e, std::string(fn_name(e.fn)) + " argument " + std::to_string(k + 1) +
                                 " must be scalar, got " + value_type_name(ts[k]));
      };
      switch (e.fn) {
        case Fn::Norm:
          if (ts[0] == ValueType::Scalar || ts[0] == ValueType::Bool)
            throw TypeError(e, "norm requires a vector argument");
          return ValueType::Scalar;
        case Fn::Dot:
          if (ts[0] != ts[1] || ts[0] == ValueType::Scalar || ts[0] == ValueType::Bool)
            throw TypeError(e, "dot requires two vectors of equal dimension");
          return ValueType::Scalar;
        case Fn::Tanh:
        case Fn::Exp:
        case Fn::Abs:
        case Fn::Sqrt:
          require_scalar(0);
          return ValueType::Scalar;
        case Fn::Min:
        case Fn::Max:
          require_scalar(0);
          require_scalar(1);
          return ValueType::Scalar;
        case Fn::Clamp:
          require_scalar(0);
          require_scalar(1);
          require_scalar(2);
          return ValueType::Scalar;
      }
      throw TypeError(e, "unknown function");
    }
    case Expr::Kind::Index: {
      const ValueType t = typecheck(*e.args[0], features);
      if (t == ValueType::Scalar || t == ValueType::Bool)
        throw TypeError(e, "indexing requires a vector");
      if (e.index_lo < 0 || e.index_lo >= value_dim(t))
        throw TypeError(e, "index " + std::to_string(e.index_lo) + " out of range for " +
                               value_type_name(t));
      return ValueType::Scalar;
    }
    case Expr::Kind::Slice: {
      const ValueType t = typecheck(*e.args[0], features);
      if (t == ValueType::Scalar || t == ValueType::Bool)
        throw TypeError(e, "slicing requires a vector");
      const int n = value_dim(t);
      if (!(0 <= e.index_lo && e.index_lo < e.index_hi && e.index_hi <= n))
        throw TypeError(e, "slice [" + std::to_string(e.index_lo) + ":" + std::to_string(e.index_hi) +
                               "] invalid for " + value_type_name(t));
      return vec_type(e.index_hi - e.index_lo);
    }
  }
  throw ContractError("typecheck: unreachable");
}

}  // namespace v2p
