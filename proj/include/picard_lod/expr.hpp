#pragma once

#include <cctype>
#include <charconv>
#include <compare>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "common.hpp"

namespace picard_lod::expr {

/// Derivative placeholder z_{alpha,gamma,h}: component h (0-based), time order gamma, spatial multi-index alpha.
struct PlaceholderKey {
    int h = 0;
    int gamma = 0;
    std::vector<int> alpha;

    int order() const {
        int n = 0;
        for (int a : alpha) n += a;
        return n;
    }
    auto operator<=>(const PlaceholderKey&) const = default;
    bool operator==(const PlaceholderKey&) const = default;
};

enum class Kind { constant, time, space, named, placeholder, add, sub, mul, div, neg, pow, sin, cos, exp };

struct Node;
using NodePtr = std::shared_ptr<const Node>;

struct Node {
    Kind kind = Kind::constant;
    double value = 0.0;
    int index = 0;
    int exponent = 0;
    int slot = -1;
    std::string name;
    PlaceholderKey key;
    std::vector<NodePtr> args;
};

/// Immutable expression tree; copies share structure.
class Expr {
public:
    Expr() : node_(make_const(0.0)) {}
    explicit Expr(NodePtr n) : node_(std::move(n)) {}
    const Node& operator*() const { return *node_; }
    const Node* operator->() const { return node_.get(); }
    const NodePtr& ptr() const { return node_; }

private:
    static NodePtr make_const(double v) {
        auto n = std::make_shared<Node>();
        n->value = v;
        return n;
    }
    NodePtr node_;
};

/// Declared arity of an expression: spatial dimension, components, spatial order L, time order p.
struct Arity {
    int s = 1;
    int m = 1;
    int L = 0;
    int p = 0;
    std::map<std::string, double> params;
    std::vector<std::string> free;
    bool unrestricted = false;
};

class parse_error : public error {
public:
    parse_error(const std::string& msg, std::size_t column)
        : error("parse error at column " + std::to_string(column) + ": " + msg), column_(column) {}
    std::size_t column() const { return column_; }

private:
    std::size_t column_;
};

// ---------------------------------------------------------------- builders

inline Expr make(Kind k, std::vector<Expr> args = {}) {
    auto n = std::make_shared<Node>();
    n->kind = k;
    for (auto& a : args) n->args.push_back(a.ptr());
    return Expr(n);
}

inline Expr constant(double v) {
    auto n = std::make_shared<Node>();
    n->value = v;
    return Expr(n);
}

inline Expr time_var() { return make(Kind::time); }

inline Expr space_var(int i) {
    auto n = std::make_shared<Node>();
    n->kind = Kind::space;
    n->index = i;
    return Expr(n);
}

inline Expr named_var(const std::string& name) {
    auto n = std::make_shared<Node>();
    n->kind = Kind::named;
    n->name = name;
    return Expr(n);
}

inline Expr placeholder(const PlaceholderKey& key) {
    auto n = std::make_shared<Node>();
    n->kind = Kind::placeholder;
    n->key = key;
    return Expr(n);
}

inline bool is_const(const Expr& e, double v) { return e->kind == Kind::constant && e->value == v; }
inline bool is_const(const Expr& e) { return e->kind == Kind::constant; }

inline Expr neg(const Expr& a) {
    if (is_const(a)) return constant(-a->value);
    if (a->kind == Kind::neg) return Expr(a->args[0]);
    return make(Kind::neg, {a});
}

inline Expr add(const Expr& a, const Expr& b) {
    if (is_const(a) && is_const(b)) return constant(a->value + b->value);
    if (is_const(a, 0.0)) return b;
    if (is_const(b, 0.0)) return a;
    return make(Kind::add, {a, b});
}

inline Expr sub(const Expr& a, const Expr& b) {
    if (is_const(a) && is_const(b)) return constant(a->value - b->value);
    if (is_const(b, 0.0)) return a;
    if (is_const(a, 0.0)) return neg(b);
    return make(Kind::sub, {a, b});
}

inline Expr mul(const Expr& a, const Expr& b) {
    if (is_const(a) && is_const(b)) return constant(a->value * b->value);
    if (is_const(a, 0.0) || is_const(b, 0.0)) return constant(0.0);
    if (is_const(a, 1.0)) return b;
    if (is_const(b, 1.0)) return a;
    if (is_const(a, -1.0)) return neg(b);
    if (is_const(b, -1.0)) return neg(a);
    return make(Kind::mul, {a, b});
}

inline Expr div(const Expr& a, const Expr& b) {
    if (is_const(b, 0.0)) throw domain_error("division by the constant 0");
    if (is_const(a) && is_const(b)) return constant(a->value / b->value);
    if (is_const(a, 0.0)) return constant(0.0);
    if (is_const(b, 1.0)) return a;
    return make(Kind::div, {a, b});
}

inline Expr pow(const Expr& a, int n) {
    if (n == 0) return constant(1.0);
    if (n == 1) return a;
    if (is_const(a)) {
        if (a->value == 0.0 && n < 0) throw domain_error("negative power of the constant 0");
        return constant(std::pow(a->value, n));
    }
    auto node = std::make_shared<Node>();
    node->kind = Kind::pow;
    node->exponent = n;
    node->args.push_back(a.ptr());
    return Expr(node);
}

inline Expr sin(const Expr& a) { return is_const(a) ? constant(std::sin(a->value)) : make(Kind::sin, {a}); }
inline Expr cos(const Expr& a) { return is_const(a) ? constant(std::cos(a->value)) : make(Kind::cos, {a}); }
inline Expr exp(const Expr& a) { return is_const(a) ? constant(std::exp(a->value)) : make(Kind::exp, {a}); }

// ---------------------------------------------------------------- printing

namespace detail {

inline int precedence(const Node& n) {
    switch (n.kind) {
        case Kind::add:
        case Kind::sub: return 1;
        case Kind::mul:
        case Kind::div: return 2;
        case Kind::neg: return 3;
        case Kind::pow: return 4;
        default: return 5;
    }
}

inline std::string number(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    std::string s(buf, res.ptr);
    return v < 0 ? "(" + s + ")" : s;
}

inline std::string placeholder_text(const PlaceholderKey& k) {
    std::string y = "y" + std::to_string(k.h + 1);
    if (k.gamma == 0 && k.order() == 0) return y;
    if (k.alpha.size() == 1) {
        std::string spec;
        if (k.gamma > 0) spec += "t" + std::to_string(k.gamma);
        int a = k.alpha[0];
        if (a > 0) spec += "x" + std::to_string(a);
        return "D" + spec + "(" + y + ")";
    }
    std::string out = "diff(" + y;
    if (k.gamma > 0) out += ", t, " + std::to_string(k.gamma);
    for (std::size_t i = 0; i < k.alpha.size(); ++i)
        if (k.alpha[i] > 0) out += ", x" + std::to_string(i + 1) + ", " + std::to_string(k.alpha[i]);
    return out + ")";
}

inline std::string print(const Node& n, int s);

inline std::string wrap(const Node& n, int s, bool paren) {
    std::string body = print(n, s);
    return paren ? "(" + body + ")" : body;
}

inline std::string print(const Node& n, int s) {
    switch (n.kind) {
        case Kind::constant: return number(n.value);
        case Kind::time: return "t";
        case Kind::space: return s == 1 ? "x" : "x" + std::to_string(n.index + 1);
        case Kind::named: return n.name;
        case Kind::placeholder: return placeholder_text(n.key);
        case Kind::add:
        case Kind::sub:
        case Kind::mul:
        case Kind::div: {
            int pr = precedence(n);
            const char* op = n.kind == Kind::add ? "+" : n.kind == Kind::sub ? "-" : n.kind == Kind::mul ? "*" : "/";
            return wrap(*n.args[0], s, precedence(*n.args[0]) < pr) + op +
                   wrap(*n.args[1], s, precedence(*n.args[1]) <= pr);
        }
        case Kind::neg: return "-" + wrap(*n.args[0], s, precedence(*n.args[0]) <= 3);
        case Kind::pow: {
            std::string e = n.exponent < 0 ? "(" + std::to_string(n.exponent) + ")" : std::to_string(n.exponent);
            return wrap(*n.args[0], s, precedence(*n.args[0]) <= 4) + "^" + e;
        }
        case Kind::sin: return "sin(" + print(*n.args[0], s) + ")";
        case Kind::cos: return "cos(" + print(*n.args[0], s) + ")";
        case Kind::exp: return "exp(" + print(*n.args[0], s) + ")";
    }
    return "?";
}

}  // namespace detail

/// Canonical text form; parsing it back yields a structurally equal tree.
inline std::string to_string(const Expr& e, int s = 1) { return detail::print(*e, s); }

// ---------------------------------------------------------------- parsing

namespace detail {

class Parser {
public:
    Parser(std::string_view text, const Arity& arity) : text_(text), ar_(arity) {}

    Expr run() {
        Expr e = expression();
        skip();
        if (pos_ != text_.size()) fail("unexpected '" + std::string(1, text_[pos_]) + "'");
        return e;
    }

private:
    [[noreturn]] void fail(const std::string& msg) const { throw parse_error(msg, pos_ + 1); }

    void skip() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    }

    bool accept(char c) {
        skip();
        if (pos_ < text_.size() && text_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    void expect(char c) {
        if (!accept(c)) fail(std::string("expected '") + c + "'");
    }

    Expr expression() {
        Expr lhs = term();
        for (;;) {
            if (accept('+')) lhs = make(Kind::add, {lhs, term()});
            else if (accept('-')) lhs = make(Kind::sub, {lhs, term()});
            else return lhs;
        }
    }

    Expr term() {
        Expr lhs = unary();
        for (;;) {
            if (accept('*')) lhs = make(Kind::mul, {lhs, unary()});
            else if (accept('/')) lhs = make(Kind::div, {lhs, unary()});
            else return lhs;
        }
    }

    Expr unary() {
        if (accept('-')) {
            Expr inner = unary();
            if (inner->kind == Kind::constant) return constant(-inner->value);
            return make(Kind::neg, {inner});
        }
        if (accept('+')) return unary();
        return power();
    }

    int integer_exponent() {
        skip();
        bool paren = accept('(');
        bool negative = accept('-');
        skip();
        std::size_t start = pos_;
        while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
        if (start == pos_) fail("exponent must be an integer literal");
        if (pos_ < text_.size() && (text_[pos_] == '.' || text_[pos_] == 'e' || text_[pos_] == 'E'))
            fail("fractional powers are not supported");
        int v = std::stoi(std::string(text_.substr(start, pos_ - start)));
        if (paren) expect(')');
        return negative ? -v : v;
    }

    Expr power() {
        Expr base = primary();
        if (accept('^')) {
            auto n = std::make_shared<Node>();
            n->kind = Kind::pow;
            n->exponent = integer_exponent();
            n->args.push_back(base.ptr());
            return Expr(n);
        }
        return base;
    }

    std::string identifier() {
        std::size_t start = pos_;
        while (pos_ < text_.size() && (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
            ++pos_;
        return std::string(text_.substr(start, pos_ - start));
    }

    Expr number() {
        const char* first = text_.data() + pos_;
        const char* last = text_.data() + text_.size();
        double v = 0;
        auto res = std::from_chars(first, last, v);
        if (res.ec != std::errc()) fail("malformed number");
        pos_ += static_cast<std::size_t>(res.ptr - first);
        return constant(v);
    }

    int component(const std::string& id) {
        if (id == "y") {
            if (ar_.m != 1) fail("'y' is ambiguous for m > 1; use y1..y" + std::to_string(ar_.m));
            return 0;
        }
        if (id.size() > 1 && id[0] == 'y' && std::all_of(id.begin() + 1, id.end(), ::isdigit)) {
            int h = std::stoi(id.substr(1));
            if (h < 1 || h > ar_.m) fail("component " + id + " outside 1.." + std::to_string(ar_.m));
            return h - 1;
        }
        fail("expected a component reference y1..y" + std::to_string(ar_.m));
    }

    // -1 denotes t, otherwise the 0-based spatial index.
    std::optional<int> variable_index(const std::string& id) {
        if (id == "t") return -1;
        if (id == "x" && ar_.s == 1) return 0;
        if (id.size() > 1 && id[0] == 'x' && std::all_of(id.begin() + 1, id.end(), ::isdigit)) {
            int i = std::stoi(id.substr(1));
            if (i >= 1 && i <= ar_.s) return i - 1;
        }
        return std::nullopt;
    }

    Expr checked_placeholder(PlaceholderKey key) {
        if (!ar_.unrestricted) {
            if (key.gamma > ar_.p)
                fail("time derivative order " + std::to_string(key.gamma) + " exceeds p = " + std::to_string(ar_.p));
            if (key.order() > ar_.L)
                fail("spatial derivative order " + std::to_string(key.order()) + " exceeds L = " +
                     std::to_string(ar_.L));
        }
        return placeholder(key);
    }

    Expr diff_call() {
        skip();
        PlaceholderKey key;
        key.alpha.assign(static_cast<std::size_t>(ar_.s), 0);
        key.h = component(identifier());
        while (accept(',')) {
            skip();
            std::string v = identifier();
            auto idx = variable_index(v);
            if (!idx) fail("unknown differentiation variable '" + v + "'");
            int count = 1;
            skip();
            std::size_t save = pos_;
            if (accept(',')) {
                skip();
                if (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
                    std::size_t start = pos_;
                    while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
                    count = std::stoi(std::string(text_.substr(start, pos_ - start)));
                } else {
                    pos_ = save;
                }
            }
            if (*idx < 0) key.gamma += count;
            else key.alpha[static_cast<std::size_t>(*idx)] += count;
        }
        expect(')');
        return checked_placeholder(key);
    }

    std::optional<PlaceholderKey> shorthand(const std::string& id) {
        if (id.size() < 3 || id[0] != 'D' || ar_.s != 1) return std::nullopt;
        PlaceholderKey key;
        key.alpha.assign(1, 0);
        std::size_t i = 1;
        auto read_int = [&](int& out) {
            std::size_t start = i;
            while (i < id.size() && std::isdigit(static_cast<unsigned char>(id[i]))) ++i;
            if (start == i) return false;
            out = std::stoi(id.substr(start, i - start));
            return true;
        };
        bool any = false;
        if (i < id.size() && id[i] == 't') {
            ++i;
            if (!read_int(key.gamma)) return std::nullopt;
            any = true;
        }
        if (i < id.size() && id[i] == 'x') {
            ++i;
            if (!read_int(key.alpha[0])) return std::nullopt;
            any = true;
        }
        if (!any || i != id.size()) return std::nullopt;
        return key;
    }

    Expr primary() {
        skip();
        if (pos_ >= text_.size()) fail("unexpected end of input");
        char c = text_[pos_];
        if (c == '(') {
            ++pos_;
            Expr e = expression();
            expect(')');
            return e;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
        if (!std::isalpha(static_cast<unsigned char>(c)) && c != '_') fail(std::string("unexpected '") + c + "'");
        std::size_t id_start = pos_;
        std::string id = identifier();
        skip();
        bool call = pos_ < text_.size() && text_[pos_] == '(';
        if (call) {
            if (id == "sin" || id == "cos" || id == "exp") {
                ++pos_;
                Expr arg = expression();
                expect(')');
                return make(id == "sin" ? Kind::sin : id == "cos" ? Kind::cos : Kind::exp, {arg});
            }
            if (id == "diff") {
                ++pos_;
                return diff_call();
            }
            if (auto key = shorthand(id)) {
                ++pos_;
                skip();
                key->h = component(identifier());
                expect(')');
                return checked_placeholder(*key);
            }
            pos_ = id_start;
            fail("unknown function '" + id + "'");
        }
        if (auto idx = variable_index(id)) return *idx < 0 ? time_var() : space_var(*idx);
        if (id == "y" || (id[0] == 'y' && id.size() > 1 && std::all_of(id.begin() + 1, id.end(), ::isdigit))) {
            PlaceholderKey key;
            key.alpha.assign(static_cast<std::size_t>(ar_.s), 0);
            pos_ = id_start;
            key.h = component(identifier());
            return placeholder(key);
        }
        if (auto it = ar_.params.find(id); it != ar_.params.end()) return constant(it->second);
        if (std::find(ar_.free.begin(), ar_.free.end(), id) != ar_.free.end()) return named_var(id);
        pos_ = id_start;
        fail("undeclared variable '" + id + "'");
    }

    std::string_view text_;
    const Arity& ar_;
    std::size_t pos_ = 0;
};

}  // namespace detail

/// Parses an expression over t, x1..xs, placeholders y / Dx2(y1) / diff(y1, t, 1, x1, 2), params and free names.
inline Expr parse(std::string_view text, const Arity& arity = {}) { return detail::Parser(text, arity).run(); }

// ---------------------------------------------------------------- inspection

inline bool structurally_equal(const Expr& a, const Expr& b) {
    const Node& x = *a;
    const Node& y = *b;
    if (x.kind != y.kind || x.args.size() != y.args.size()) return false;
    switch (x.kind) {
        case Kind::constant:
            if (x.value != y.value) return false;
            break;
        case Kind::space:
            if (x.index != y.index) return false;
            break;
        case Kind::named:
            if (x.name != y.name) return false;
            break;
        case Kind::placeholder:
            if (x.key != y.key) return false;
            break;
        case Kind::pow:
            if (x.exponent != y.exponent) return false;
            break;
        default: break;
    }
    for (std::size_t i = 0; i < x.args.size(); ++i)
        if (!structurally_equal(Expr(x.args[i]), Expr(y.args[i]))) return false;
    return true;
}

/// Variables referenced by an expression.
struct Usage {
    bool time = false;
    std::set<int> space;
    std::set<std::string> named;
    std::set<PlaceholderKey> placeholders;
};

inline void collect(const Node& n, Usage& u) {
    switch (n.kind) {
        case Kind::time: u.time = true; break;
        case Kind::space: u.space.insert(n.index); break;
        case Kind::named: u.named.insert(n.name); break;
        case Kind::placeholder: u.placeholders.insert(n.key); break;
        default: break;
    }
    for (auto& a : n.args) collect(*a, u);
}

inline Usage usage(const Expr& e) {
    Usage u;
    collect(*e, u);
    return u;
}

inline std::vector<PlaceholderKey> placeholders(const std::vector<Expr>& es) {
    std::set<PlaceholderKey> all;
    for (auto& e : es) {
        auto u = usage(e);
        all.insert(u.placeholders.begin(), u.placeholders.end());
    }
    return {all.begin(), all.end()};
}

// ---------------------------------------------------------------- substitution

inline Expr rebuild(const Node& n, const std::vector<Expr>& args) {
    switch (n.kind) {
        case Kind::add: return add(args[0], args[1]);
        case Kind::sub: return sub(args[0], args[1]);
        case Kind::mul: return mul(args[0], args[1]);
        case Kind::div: return div(args[0], args[1]);
        case Kind::neg: return neg(args[0]);
        case Kind::pow: return pow(args[0], n.exponent);
        case Kind::sin: return sin(args[0]);
        case Kind::cos: return cos(args[0]);
        case Kind::exp: return exp(args[0]);
        default: {
            auto copy = std::make_shared<Node>(n);
            return Expr(copy);
        }
    }
}

/// Replaces leaves for which fn returns a value; other nodes are rebuilt with simplification.
inline Expr substitute(const Expr& e, const std::function<std::optional<Expr>(const Node&)>& fn) {
    if (e->args.empty()) {
        if (auto r = fn(*e)) return *r;
        return e;
    }
    std::vector<Expr> args;
    for (auto& a : e->args) args.push_back(substitute(Expr(a), fn));
    return rebuild(*e, args);
}

/// Copy of e whose placeholders carry their position in keys as evaluation slot.
inline Expr with_slots(const Expr& e, const std::vector<PlaceholderKey>& keys) {
    return substitute(e, [&](const Node& n) -> std::optional<Expr> {
        if (n.kind != Kind::placeholder) return std::nullopt;
        auto it = std::find(keys.begin(), keys.end(), n.key);
        if (it == keys.end()) return std::nullopt;
        auto copy = std::make_shared<Node>(n);
        copy->slot = static_cast<int>(it - keys.begin());
        return Expr(copy);
    });
}

// ---------------------------------------------------------------- evaluation

/// Values for the free symbols of an expression.
struct Bindings {
    std::optional<double> t;
    std::vector<double> x;
    std::map<PlaceholderKey, double> z;
    std::map<std::string, double> named;
};

namespace detail {

template <class T>
T check(T v) {
    if (!wmath::isfinite(v)) throw domain_error("non-finite value during evaluation");
    return v;
}

template <class T>
T ipow(T base, int n) {
    if (n < 0) {
        if (base == T(0)) throw domain_error("negative power of zero");
        return T(1) / ipow(base, -n);
    }
    T r = 1;
    while (n) {
        if (n & 1) r *= base;
        base *= base;
        n >>= 1;
    }
    return r;
}

}  // namespace detail

/// Evaluation over slot arrays: tx = (t, x1..xs), z indexed by slot. Used on sampling grids.
template <class T>
T eval_slots(const Node& n, const T* tx, const T* z) {
    switch (n.kind) {
        case Kind::constant: return T(n.value);
        case Kind::time: return tx[0];
        case Kind::space: return tx[1 + n.index];
        case Kind::named: throw domain_error("unbound variable '" + n.name + "'");
        case Kind::placeholder:
            if (n.slot < 0 || z == nullptr) throw domain_error("unbound placeholder " + detail::placeholder_text(n.key));
            return z[n.slot];
        case Kind::add: return eval_slots(*n.args[0], tx, z) + eval_slots(*n.args[1], tx, z);
        case Kind::sub: return eval_slots(*n.args[0], tx, z) - eval_slots(*n.args[1], tx, z);
        case Kind::mul: return eval_slots(*n.args[0], tx, z) * eval_slots(*n.args[1], tx, z);
        case Kind::div: {
            T den = eval_slots(*n.args[1], tx, z);
            if (den == T(0)) throw domain_error("division by zero");
            return eval_slots(*n.args[0], tx, z) / den;
        }
        case Kind::neg: return -eval_slots(*n.args[0], tx, z);
        case Kind::pow: return detail::ipow(eval_slots(*n.args[0], tx, z), n.exponent);
        case Kind::sin: return wmath::sin(eval_slots(*n.args[0], tx, z));
        case Kind::cos: return wmath::cos(eval_slots(*n.args[0], tx, z));
        case Kind::exp: return detail::check(wmath::exp(eval_slots(*n.args[0], tx, z)));
    }
    return T(0);
}

/// Evaluates e under the bindings; unbound symbols, zero denominators and non-finite results are errors.
template <class T = double>
T eval_as(const Expr& e, const Bindings& b) {
    Usage u = usage(e);
    std::vector<PlaceholderKey> keys(u.placeholders.begin(), u.placeholders.end());
    for (auto& k : keys)
        if (!b.z.count(k)) throw domain_error("unbound placeholder " + detail::placeholder_text(k));
    if (u.time && !b.t) throw domain_error("unbound variable 't'");
    for (int i : u.space)
        if (static_cast<std::size_t>(i) >= b.x.size())
            throw domain_error("unbound variable 'x" + std::to_string(i + 1) + "'");
    Expr bound = substitute(e, [&](const Node& n) -> std::optional<Expr> {
        if (n.kind == Kind::named) {
            auto it = b.named.find(n.name);
            if (it == b.named.end()) throw domain_error("unbound variable '" + n.name + "'");
            return constant(it->second);
        }
        return std::nullopt;
    });
    bound = with_slots(bound, keys);
    std::vector<T> tx(1 + b.x.size());
    tx[0] = T(b.t.value_or(0.0));
    for (std::size_t i = 0; i < b.x.size(); ++i) tx[1 + i] = T(b.x[i]);
    std::vector<T> z;
    for (auto& k : keys) z.push_back(T(b.z.at(k)));
    return detail::check(eval_slots<T>(*bound, tx.data(), z.data()));
}

inline double eval(const Expr& e, const Bindings& b) { return eval_as<double>(e, b); }

// ---------------------------------------------------------------- differentiation

/// Differentiation variable: time, spatial index, named symbol or placeholder (treated as independent).
struct Var {
    enum class Type { time, space, named, placeholder } type = Type::time;
    int index = 0;
    std::string name;
    PlaceholderKey key;

    static Var t() { return {}; }
    static Var x(int i) { return {Type::space, i, {}, {}}; }
    static Var symbol(std::string n) { return {Type::named, 0, std::move(n), {}}; }
    static Var z(PlaceholderKey k) { return {Type::placeholder, 0, {}, std::move(k)}; }
};

inline bool is_var(const Node& n, const Var& v) {
    switch (v.type) {
        case Var::Type::time: return n.kind == Kind::time;
        case Var::Type::space: return n.kind == Kind::space && n.index == v.index;
        case Var::Type::named: return n.kind == Kind::named && n.name == v.name;
        case Var::Type::placeholder: return n.kind == Kind::placeholder && n.key == v.key;
    }
    return false;
}

inline Expr partial(const Expr& e, const Var& v) {
    const Node& n = *e;
    auto arg = [&](std::size_t i) { return Expr(n.args[i]); };
    switch (n.kind) {
        case Kind::constant: return constant(0.0);
        case Kind::time:
        case Kind::space:
        case Kind::named:
        case Kind::placeholder: return constant(is_var(n, v) ? 1.0 : 0.0);
        case Kind::add: return add(partial(arg(0), v), partial(arg(1), v));
        case Kind::sub: return sub(partial(arg(0), v), partial(arg(1), v));
        case Kind::mul:
            return add(mul(partial(arg(0), v), arg(1)), mul(arg(0), partial(arg(1), v)));
        case Kind::div: {
            Expr du = partial(arg(0), v), dw = partial(arg(1), v);
            if (is_const(dw, 0.0)) return div(du, arg(1));
            return div(sub(mul(du, arg(1)), mul(arg(0), dw)), pow(arg(1), 2));
        }
        case Kind::neg: return neg(partial(arg(0), v));
        case Kind::pow:
            return mul(mul(constant(n.exponent), pow(arg(0), n.exponent - 1)), partial(arg(0), v));
        case Kind::sin: return mul(cos(arg(0)), partial(arg(0), v));
        case Kind::cos: return neg(mul(sin(arg(0)), partial(arg(0), v)));
        case Kind::exp: return mul(e, partial(arg(0), v));
    }
    return constant(0.0);
}

/// order-th partial derivative; placeholders are opaque leaves.
inline Expr symbolic_partial(const Expr& e, const Var& v, int order = 1) {
    if (order < 0) throw error("negative derivative order");
    Expr r = e;
    for (int i = 0; i < order; ++i) r = partial(r, v);
    return r;
}

/// Total derivative in x_i along y(t, x): d/dx_i F + sum_z dF/dz * z_{alpha+e_i}.
inline Expr total_space_derivative(const Expr& e, int i) {
    Expr r = partial(e, Var::x(i));
    for (auto& key : usage(e).placeholders) {
        PlaceholderKey up = key;
        if (static_cast<std::size_t>(i) >= up.alpha.size()) up.alpha.resize(static_cast<std::size_t>(i) + 1, 0);
        up.alpha[static_cast<std::size_t>(i)] += 1;
        r = add(r, mul(partial(e, Var::z(key)), placeholder(up)));
    }
    return r;
}

}  // namespace picard_lod::expr
