#include "vmr/toy_corpus.hpp"

#include <algorithm>
#include <array>
#include <functional>
#include <optional>
#include <random>
#include <string_view>

namespace vmr {
namespace {

enum class Role { List, Num, Str, Dict, Obj, Elem };

constexpr std::array<std::string_view, 12> kListNames = {"items",   "values", "nums",   "records", "rows",  "entries",
                                                         "results", "buffer", "queue",  "batch",   "parts", "samples"};
constexpr std::array<std::string_view, 14> kNumNames = {"count", "total", "limit",  "size",  "index", "offset", "step",
                                                        "score", "width", "height", "depth", "start", "best",   "acc"};
constexpr std::array<std::string_view, 10> kStrNames = {"name", "key",   "label",  "prefix", "text",
                                                        "path", "title", "suffix", "tag",    "word"};
constexpr std::array<std::string_view, 8> kDictNames = {"table",    "mapping", "cache",   "config",
                                                        "counters", "lookup",  "registry", "options"};
constexpr std::array<std::string_view, 8> kObjNames = {"node",    "conn",    "client", "parser",
                                                       "handler", "session", "writer", "target"};
constexpr std::array<std::string_view, 6> kElemNames = {"x", "item", "elem", "val", "cur", "entry"};

constexpr std::array<std::string_view, 12> kVerbs = {"compute", "process", "build", "update", "collect", "merge",
                                                     "scan",    "count",   "find",  "apply",  "load",    "check"};
constexpr std::array<std::string_view, 12> kNouns = {"total", "items", "index",  "stats", "names",   "rows",
                                                     "cache", "range", "scores", "paths", "entries", "limits"};
constexpr std::array<std::string_view, 6> kMethods = {"send", "write", "push", "emit", "store", "log"};
constexpr std::array<std::string_view, 4> kAttrs = {"name", "size", "kind", "level"};

struct Var {
  std::string name;
  Role role;
};

class FunctionWriter {
 public:
  FunctionWriter(std::mt19937_64& rng, const ToyCorpusConfig& config) : rng_(rng), config_(config) {}

  std::string write() {
    const std::string fn_name =
        std::string(pick(kVerbs)) + "_" + std::string(pick(kNouns)) + "_" + std::to_string(uniform(0, 99));
    const std::size_t n_params = uniform(2, 3);
    std::vector<std::string> params;
    for (std::size_t i = 0; i < n_params; ++i) {
      const Role role = static_cast<Role>(uniform(0, 4));
      params.push_back(fresh(role));
    }
    std::string head = "def " + fn_name + "(";
    for (std::size_t i = 0; i < params.size(); ++i) head += (i ? ", " : "") + params[i];
    lines_.push_back(head + "):");

    const std::size_t n_statements = uniform(config_.min_statements, config_.max_statements);
    for (std::size_t i = 0; i < n_statements; ++i) statement(1);
    const Var* ret = last_created_ ? &*last_created_ : &env_[uniform(0, env_.size() - 1)];
    emit(1, "return " + ret->name);

    std::string out;
    for (const std::string& l : lines_) out += l + "\n";
    return out;
  }

 private:
  std::size_t uniform(std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng_); }

  template <std::size_t N>
  std::string_view pick(const std::array<std::string_view, N>& pool) {
    return pool[uniform(0, N - 1)];
  }

  void emit(int level, const std::string& text) { lines_.push_back(std::string(2 * level, ' ') + text); }

  std::vector<const Var*> of(Role role, const std::string& exclude = "") const {
    std::vector<const Var*> out;
    for (const Var& v : env_)
      if (v.role == role && v.name != exclude) out.push_back(&v);
    return out;
  }

  const Var* any_of(Role role, const std::string& exclude = "") {
    auto vs = of(role, exclude);
    return vs.empty() ? nullptr : vs[uniform(0, vs.size() - 1)];
  }

  std::string fresh(Role role) {
    auto try_pool = [&](auto const& pool) -> std::string {
      std::vector<std::string_view> free;
      for (std::string_view n : pool)
        if (std::none_of(env_.begin(), env_.end(), [&](const Var& v) { return v.name == n; })) free.push_back(n);
      if (free.empty()) return {};
      return std::string(free[uniform(0, free.size() - 1)]);
    };
    std::string name;
    switch (role) {
      case Role::List: name = try_pool(kListNames); break;
      case Role::Num: name = try_pool(kNumNames); break;
      case Role::Str: name = try_pool(kStrNames); break;
      case Role::Dict: name = try_pool(kDictNames); break;
      case Role::Obj: name = try_pool(kObjNames); break;
      case Role::Elem: name = try_pool(kElemNames); break;
    }
    if (name.empty()) name = "tmp" + std::to_string(env_.size());
    env_.push_back(Var{name, role});
    return name;
  }

  std::string define(Role role) {
    std::string name = fresh(role);
    last_created_ = env_.back();
    return name;
  }

  // Ensures a variable of `role` exists, initializing one at `level` if not.
  std::string ensure(Role role, int level) {
    if (const Var* v = any_of(role)) return v->name;
    const std::string name = define(role);
    switch (role) {
      case Role::List: emit(level, name + " = []"); break;
      case Role::Dict: emit(level, name + " = {}"); break;
      case Role::Str: emit(level, name + " = ''"); break;
      default: emit(level, name + " = 0"); break;
    }
    return name;
  }

  void statement(int level) {
    using Template = std::function<bool()>;
    const std::vector<Template> templates = {
        [&] {  // accumulator over a list
          const Var* l = any_of(Role::List);
          if (!l || level > 1) return false;
          const std::string list = l->name;
          loop(level, list);
          return true;
        },
        [&] {
          const Var* l = any_of(Role::List);
          if (!l) return false;
          const std::string list = l->name;
          emit(level, define(Role::Num) + " = len(" + list + ")");
          return true;
        },
        [&] {
          const Var* a = any_of(Role::Num);
          if (!a) return false;
          const Var* b = any_of(Role::Num, a->name);
          if (!b) return false;
          const std::string an = a->name, bn = b->name;
          emit(level, "if " + an + " > " + bn + ":");
          emit(level + 1, an + " = " + bn);
          return true;
        },
        [&] {
          const Var* a = any_of(Role::Num);
          if (!a || level > 1) return false;
          const Var* b = any_of(Role::Num, a->name);
          if (!b) return false;
          const std::string an = a->name, bn = b->name;
          emit(level, "while " + an + " < " + bn + ":");
          emit(level + 1, an + " = " + an + " + 1");
          return true;
        },
        [&] {
          const Var* d = any_of(Role::Dict);
          const Var* s = any_of(Role::Str);
          const Var* n = any_of(Role::Num);
          if (!d || !s || !n) return false;
          emit(level, d->name + "[" + s->name + "] = " + n->name);
          return true;
        },
        [&] {
          const Var* d = any_of(Role::Dict);
          const Var* s = any_of(Role::Str);
          if (!d || !s) return false;
          const std::string dn = d->name, sn = s->name;
          emit(level, define(Role::Num) + " = " + dn + ".get(" + sn + ", 0)");
          return true;
        },
        [&] {
          const Var* s = any_of(Role::Str);
          if (!s) return false;
          const Var* t = any_of(Role::Str, s->name);
          const std::string lhs = s->name, rhs = t ? t->name : std::string("'_'");
          emit(level, define(Role::Str) + " = " + lhs + " + " + rhs);
          return true;
        },
        [&] {
          const Var* s = any_of(Role::Str);
          if (!s) return false;
          const std::string sn = s->name;
          emit(level, define(Role::Str) + " = " + sn + ".strip()");
          return true;
        },
        [&] {
          const Var* o = any_of(Role::Obj);
          if (!o) return false;
          const Var* arg = any_of(uniform(0, 1) ? Role::Str : Role::Dict);
          if (!arg) return false;
          emit(level, o->name + "." + std::string(pick(kMethods)) + "(" + arg->name + ")");
          return true;
        },
        [&] {
          const Var* o = any_of(Role::Obj);
          if (!o) return false;
          const std::string on = o->name;
          const std::string_view attr = pick(kAttrs);
          const Role role = attr == "size" || attr == "level" ? Role::Num : Role::Str;
          emit(level, define(role) + " = " + on + "." + std::string(attr));
          return true;
        },
        [&] {
          const Var* a = any_of(Role::Num);
          if (!a) return false;
          const Var* b = any_of(Role::Num, a->name);
          if (!b) return false;
          const std::string an = a->name, bn = b->name;
          emit(level, define(Role::Num) + " = " + an + " * 2 + " + bn);
          return true;
        },
        [&] {
          const Var* l = any_of(Role::List);
          const Var* n = any_of(Role::Num);
          if (!l || !n) return false;
          const std::string ln = l->name, nn = n->name;
          emit(level, define(Role::Elem) + " = " + ln + "[" + nn + "]");
          return true;
        },
        [&] {
          const Var* l = any_of(Role::List);
          if (!l) return false;
          const Var* v = any_of(uniform(0, 1) ? Role::Num : Role::Str);
          if (!v) return false;
          emit(level, l->name + ".append(" + v->name + ")");
          return true;
        },
        [&] {
          const Role role = uniform(0, 1) ? Role::List : Role::Dict;
          emit(level, define(role) + (role == Role::List ? " = []" : " = {}"));
          return true;
        },
    };
    for (int attempt = 0; attempt < 32; ++attempt)
      if (templates[uniform(0, templates.size() - 1)]()) return;
    emit(level, ensure(Role::Num, level) + " = 0");
  }

  void loop(int level, const std::string& list) {
    const std::size_t body = uniform(1, 2);
    // Accumulators and sinks are initialized before the loop header.
    std::vector<std::function<void(const std::string&)>> parts;
    for (std::size_t i = 0; i < body; ++i) {
      switch (uniform(0, 3)) {
        case 0: {
          const std::string acc = ensure(Role::Num, level);
          parts.push_back([this, acc, level](const std::string& e) { emit(level + 1, acc + " = " + acc + " + " + e); });
          break;
        }
        case 1: {
          const Var* other = any_of(Role::List, list);
          std::string sink;
          if (other) {
            sink = other->name;
          } else {
            sink = define(Role::List);
            emit(level, sink + " = []");
          }
          parts.push_back([this, sink, level](const std::string& e) { emit(level + 1, sink + ".append(" + e + ")"); });
          break;
        }
        case 2: {
          const std::string best = ensure(Role::Num, level);
          parts.push_back([this, best, level](const std::string& e) {
            emit(level + 1, "if " + e + " > " + best + ":");
            emit(level + 2, best + " = " + e);
          });
          break;
        }
        default: {
          const std::string d = ensure(Role::Dict, level);
          parts.push_back([this, d, level](const std::string& e) {
            emit(level + 1, d + "[" + e + "] = " + d + ".get(" + e + ", 0) + 1");
          });
          break;
        }
      }
    }
    const std::string elem = fresh(Role::Elem);
    emit(level, "for " + elem + " in " + list + ":");
    for (const auto& p : parts) p(elem);
  }

  std::mt19937_64& rng_;
  const ToyCorpusConfig& config_;
  std::vector<Var> env_;
  std::optional<Var> last_created_;
  std::vector<std::string> lines_;
};

}  // namespace

std::vector<std::string> generate_toy_corpus(const ToyCorpusConfig& config) {
  std::mt19937_64 rng(config.seed);
  std::vector<std::string> files;
  files.reserve(config.files);
  for (std::size_t f = 0; f < config.files; ++f) {
    std::string src;
    for (std::size_t i = 0; i < config.functions_per_file; ++i) {
      if (i) src += "\n";
      src += FunctionWriter(rng, config).write();
    }
    files.push_back(std::move(src));
  }
  return files;
}

}  // namespace vmr
