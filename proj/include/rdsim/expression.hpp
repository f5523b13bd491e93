#pragma once

// Small arithmetic expression language for user reaction terms and
// coefficient fields.
//
//   expr    := term (('+' | '-') term)*
//   term    := unary (('*' | '/') unary)*
//   unary   := ('-' | '+') unary | power
//   power   := primary ('^' unary)?          right associative
//   primary := number | symbol | name '(' expr (',' expr)* ')' | '(' expr ')'
//
// Symbols: u1..um (species), x, y (position), t (time), pi.
// Functions: exp, log, sqrt, abs, sin, cos, step (1 for z > 0, else 0),
// min, max.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdlib>
#include <memory>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "rdsim/error.hpp"

namespace rdsim {

struct ExpressionContext {
  std::span<const double> u;
  double x = 0.0;
  double y = 0.0;
  double t = 0.0;
};

class Expression {
 public:
  /// Parses `source`; species symbols beyond u<species> are rejected.
  static Expression parse(const std::string& source, std::size_t species) {
    Parser p{source, 0, species};
    Expression e;
    e.source_ = source;
    e.root_ = p.parse_expression();
    p.skip_space();
    if (p.pos != source.size()) p.fail("unexpected trailing input");
    e.max_species_ = p.max_species_seen;
    return e;
  }

  double evaluate(const ExpressionContext& ctx) const { return eval(*root_, ctx); }

  const std::string& source() const noexcept { return source_; }

  /// Highest species symbol referenced (0 if none).
  std::size_t max_species_referenced() const noexcept { return max_species_; }

 private:
  enum class Op { Constant, Species, X, Y, T, Add, Sub, Mul, Div, Pow, Neg, Exp, Log, Sqrt, Abs, Sin, Cos, Step, Min, Max };

  struct Node {
    Op op;
    double value = 0.0;
    std::size_t index = 0;
    std::vector<std::shared_ptr<const Node>> args;
  };
  using NodePtr = std::shared_ptr<const Node>;

  static NodePtr make(Op op, std::vector<NodePtr> args = {}, double value = 0.0, std::size_t index = 0) {
    auto n = std::make_shared<Node>();
    n->op = op;
    n->value = value;
    n->index = index;
    n->args = std::move(args);
    return n;
  }

  struct Parser {
    const std::string& src;
    std::size_t pos;
    std::size_t species;
    std::size_t max_species_seen = 0;

    [[noreturn]] void fail(const std::string& msg) const {
      throw ConfigError("expression '" + src + "': " + msg + " at position " + std::to_string(pos));
    }

    void skip_space() {
      while (pos < src.size() && std::isspace(static_cast<unsigned char>(src[pos]))) ++pos;
    }

    bool accept(char c) {
      skip_space();
      if (pos < src.size() && src[pos] == c) {
        ++pos;
        return true;
      }
      return false;
    }

    void expect(char c) {
      if (!accept(c)) fail(std::string("expected '") + c + "'");
    }

    NodePtr parse_expression() {
      NodePtr lhs = parse_term();
      while (true) {
        if (accept('+')) {
          lhs = make(Op::Add, {lhs, parse_term()});
        } else if (accept('-')) {
          lhs = make(Op::Sub, {lhs, parse_term()});
        } else {
          return lhs;
        }
      }
    }

    NodePtr parse_term() {
      NodePtr lhs = parse_unary();
      while (true) {
        if (accept('*')) {
          lhs = make(Op::Mul, {lhs, parse_unary()});
        } else if (accept('/')) {
          lhs = make(Op::Div, {lhs, parse_unary()});
        } else {
          return lhs;
        }
      }
    }

    NodePtr parse_unary() {
      if (accept('-')) return make(Op::Neg, {parse_unary()});
      if (accept('+')) return parse_unary();
      return parse_power();
    }

    NodePtr parse_power() {
      NodePtr base = parse_primary();
      if (accept('^')) return make(Op::Pow, {base, parse_unary()});
      return base;
    }

    NodePtr parse_primary() {
      skip_space();
      if (pos >= src.size()) fail("unexpected end of input");
      const char c = src[pos];
      if (c == '(') {
        ++pos;
        NodePtr inner = parse_expression();
        expect(')');
        return inner;
      }
      if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
      if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return parse_name();
      fail(std::string("unexpected character '") + c + "'");
    }

    NodePtr parse_number() {
      const char* begin = src.c_str() + pos;
      char* end = nullptr;
      const double v = std::strtod(begin, &end);
      if (end == begin) fail("malformed number");
      pos += static_cast<std::size_t>(end - begin);
      return make(Op::Constant, {}, v);
    }

    NodePtr parse_name() {
      const std::size_t start = pos;
      while (pos < src.size() && (std::isalnum(static_cast<unsigned char>(src[pos])) || src[pos] == '_')) ++pos;
      const std::string name = src.substr(start, pos - start);

      skip_space();
      if (pos < src.size() && src[pos] == '(') {
        ++pos;
        std::vector<NodePtr> args{parse_expression()};
        while (accept(',')) args.push_back(parse_expression());
        expect(')');
        return make_call(name, std::move(args));
      }

      if (name == "x") return make(Op::X);
      if (name == "y") return make(Op::Y);
      if (name == "t") return make(Op::T);
      if (name == "pi") return make(Op::Constant, {}, std::numbers::pi);
      if (name.size() >= 2 && name[0] == 'u' &&
          std::all_of(name.begin() + 1, name.end(), [](char ch) { return std::isdigit(static_cast<unsigned char>(ch)); })) {
        const std::size_t k = std::stoul(name.substr(1));
        if (k == 0 || k > species) fail("species symbol " + name + " out of range 1.." + std::to_string(species));
        max_species_seen = std::max(max_species_seen, k);
        return make(Op::Species, {}, 0.0, k - 1);
      }
      fail("unknown symbol '" + name + "'");
    }

    NodePtr make_call(const std::string& name, std::vector<NodePtr> args) {
      auto unary = [&](Op op) {
        if (args.size() != 1) fail(name + " takes exactly one argument");
        return make(op, std::move(args));
      };
      if (name == "exp") return unary(Op::Exp);
      if (name == "log") return unary(Op::Log);
      if (name == "sqrt") return unary(Op::Sqrt);
      if (name == "abs") return unary(Op::Abs);
      if (name == "sin") return unary(Op::Sin);
      if (name == "cos") return unary(Op::Cos);
      if (name == "step") return unary(Op::Step);
      if (name == "min" || name == "max") {
        if (args.size() < 2) fail(name + " takes at least two arguments");
        return make(name == "min" ? Op::Min : Op::Max, std::move(args));
      }
      fail("unknown function '" + name + "'");
    }
  };

  static double eval(const Node& n, const ExpressionContext& ctx) {
    switch (n.op) {
      case Op::Constant: return n.value;
      case Op::Species: return ctx.u[n.index];
      case Op::X: return ctx.x;
      case Op::Y: return ctx.y;
      case Op::T: return ctx.t;
      case Op::Add: return eval(*n.args[0], ctx) + eval(*n.args[1], ctx);
      case Op::Sub: return eval(*n.args[0], ctx) - eval(*n.args[1], ctx);
      case Op::Mul: return eval(*n.args[0], ctx) * eval(*n.args[1], ctx);
      case Op::Div: return eval(*n.args[0], ctx) / eval(*n.args[1], ctx);
      case Op::Pow: return std::pow(eval(*n.args[0], ctx), eval(*n.args[1], ctx));
      case Op::Neg: return -eval(*n.args[0], ctx);
      case Op::Exp: return std::exp(eval(*n.args[0], ctx));
      case Op::Log: return std::log(eval(*n.args[0], ctx));
      case Op::Sqrt: return std::sqrt(eval(*n.args[0], ctx));
      case Op::Abs: return std::abs(eval(*n.args[0], ctx));
      case Op::Sin: return std::sin(eval(*n.args[0], ctx));
      case Op::Cos: return std::cos(eval(*n.args[0], ctx));
      case Op::Step: return eval(*n.args[0], ctx) > 0.0 ? 1.0 : 0.0;
      case Op::Min:
      case Op::Max: {
        double acc = eval(*n.args[0], ctx);
        for (std::size_t k = 1; k < n.args.size(); ++k) {
          const double v = eval(*n.args[k], ctx);
          acc = (n.op == Op::Min) ? std::min(acc, v) : std::max(acc, v);
        }
        return acc;
      }
    }
    return 0.0;
  }

  std::string source_;
  NodePtr root_;
  std::size_t max_species_ = 0;
};

}  // namespace rdsim
