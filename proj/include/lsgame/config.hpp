#pragma once

// JSON form of a game:
//
// {
//   "players": 2, "horizon": 1.0, "dt": 0.01, "initial_state": [0.0],
//   "dynamics": {"drift": {"type": "zero"},
//                "diffusion": {"type": "scalar", "sigma": 1.0}},
//   "costs": [{"running": {"type": "quadratic_well", "q": 1.0,
//                          "center": {"type": "linear", "c": [-1.0]}},
//              "terminal": {"type": "quadratic", "q_T": 1.0,
//                           "center": {"type": "linear", "c": [-1.0]}}}, ...],
//   "nominal_controls": [{"type": "zero"}, ...],
//   "alpha": [[1.0, 0.6], [0.6, 1.0]]
// }
//
// Drift types: zero | constant {b} | linear {A, b}. Diffusion types:
// scalar {sigma} | matrix {g}. Running: zero | quadratic_well {q, center}.
// Terminal: zero | quadratic {q_T, center}. Center: constant | linear {c}.
// Optional: "cond_bound". Unknown fields are errors.

#include <lsgame/error.hpp>
#include <lsgame/game_model.hpp>

#include <json.hpp>

#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace lsgame {

using Json = nlohmann::json;

/// Collects schema problems by JSON path and reports them all at once.
class SchemaChecker {
 public:
  void fail(const std::string& path, const std::string& what) {
    errors_.push_back((path.empty() ? "/" : path) + ": " + what);
  }

  void add(std::string line) { errors_.push_back(std::move(line)); }

  /// Rejects keys outside `allowed`; returns false if `node` is not an object.
  bool object(const Json& node, const std::string& path, std::initializer_list<const char*> allowed) {
    if (!node.is_object()) {
      fail(path, "expected an object");
      return false;
    }
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (auto it = node.begin(); it != node.end(); ++it)
      if (!ok.count(it.key())) fail(path + "/" + it.key(), "unknown field");
    return true;
  }

  const Json* field(const Json& node, const std::string& path, const char* key, bool required = true) {
    if (!node.is_object()) return nullptr;
    const auto it = node.find(key);
    if (it == node.end()) {
      if (required) fail(path + "/" + key, "missing required field");
      return nullptr;
    }
    return &*it;
  }

  double number(const Json& node, const std::string& path, double fallback = 0.0) {
    if (!node.is_number()) {
      fail(path, "expected a number");
      return fallback;
    }
    return node.get<double>();
  }

  std::size_t count(const Json& node, const std::string& path, std::size_t fallback = 0) {
    if (!node.is_number_integer() || node.get<long long>() < 1) {
      fail(path, "expected a positive integer");
      return fallback;
    }
    return node.get<std::size_t>();
  }

  Vector vector(const Json& node, const std::string& path) {
    Vector out;
    if (!node.is_array()) {
      fail(path, "expected an array of numbers");
      return out;
    }
    for (std::size_t k = 0; k < node.size(); ++k)
      out.push_back(number(node[k], path + "/" + std::to_string(k)));
    return out;
  }

  Matrix matrix(const Json& node, const std::string& path) {
    Matrix out;
    if (!node.is_array()) {
      fail(path, "expected an array of arrays");
      return out;
    }
    for (std::size_t k = 0; k < node.size(); ++k) out.push_back(vector(node[k], path + "/" + std::to_string(k)));
    return out;
  }

  std::string type_tag(const Json& node, const std::string& path) {
    const Json* t = field(node, path, "type");
    if (t == nullptr) return {};
    if (!t->is_string()) {
      fail(path + "/type", "expected a string");
      return {};
    }
    return t->get<std::string>();
  }

  [[nodiscard]] bool ok() const noexcept { return errors_.empty(); }
  [[nodiscard]] const std::vector<std::string>& errors() const noexcept { return errors_; }

  void throw_if_failed() const {
    if (ok()) return;
    std::string msg = "invalid configuration:";
    for (const auto& e : errors_) msg += "\n  " + e;
    throw Error(Errc::kSchemaViolation, msg);
  }

 private:
  std::vector<std::string> errors_;
};

namespace detail {

inline CenterPath parse_center(SchemaChecker& sc, const Json& node, const std::string& path) {
  if (!sc.object(node, path, {"type", "c"})) return ConstantCenter{};
  const auto tag = sc.type_tag(node, path);
  Vector c;
  if (const Json* v = sc.field(node, path, "c")) c = sc.vector(*v, path + "/c");
  if (tag == "constant") return ConstantCenter{c};
  if (tag == "linear") return LinearCenter{c};
  if (!tag.empty()) sc.fail(path + "/type", "expected \"constant\" or \"linear\"");
  return ConstantCenter{c};
}

inline RunningCostSpec parse_running(SchemaChecker& sc, const Json& node, const std::string& path) {
  if (!node.is_object()) {
    sc.fail(path, "expected an object");
    return ZeroRunningCost{};
  }
  const auto tag = sc.type_tag(node, path);
  if (tag == "zero") {
    sc.object(node, path, {"type"});
    return ZeroRunningCost{};
  }
  if (tag == "quadratic_well") {
    sc.object(node, path, {"type", "q", "center"});
    QuadraticWellCost w;
    if (const Json* q = sc.field(node, path, "q")) w.q = sc.number(*q, path + "/q");
    if (const Json* c = sc.field(node, path, "center")) w.center = parse_center(sc, *c, path + "/center");
    return w;
  }
  if (!tag.empty()) sc.fail(path + "/type", "expected \"zero\" or \"quadratic_well\"");
  return ZeroRunningCost{};
}

inline TerminalCostSpec parse_terminal(SchemaChecker& sc, const Json& node, const std::string& path) {
  if (!node.is_object()) {
    sc.fail(path, "expected an object");
    return ZeroTerminalCost{};
  }
  const auto tag = sc.type_tag(node, path);
  if (tag == "zero") {
    sc.object(node, path, {"type"});
    return ZeroTerminalCost{};
  }
  if (tag == "quadratic") {
    sc.object(node, path, {"type", "q_T", "center"});
    QuadraticTerminalCost w;
    if (const Json* q = sc.field(node, path, "q_T")) w.q_T = sc.number(*q, path + "/q_T");
    if (const Json* c = sc.field(node, path, "center")) w.center = parse_center(sc, *c, path + "/center");
    return w;
  }
  if (!tag.empty()) sc.fail(path + "/type", "expected \"zero\" or \"quadratic\"");
  return ZeroTerminalCost{};
}

inline DriftSpec parse_drift(SchemaChecker& sc, const Json& node, const std::string& path) {
  if (!node.is_object()) {
    sc.fail(path, "expected an object");
    return ZeroDrift{};
  }
  const auto tag = sc.type_tag(node, path);
  if (tag == "zero") {
    sc.object(node, path, {"type"});
    return ZeroDrift{};
  }
  if (tag == "constant") {
    sc.object(node, path, {"type", "b"});
    ConstantDrift d;
    if (const Json* b = sc.field(node, path, "b")) d.b = sc.vector(*b, path + "/b");
    return d;
  }
  if (tag == "linear") {
    sc.object(node, path, {"type", "A", "b"});
    LinearDrift d;
    if (const Json* a = sc.field(node, path, "A")) d.A = sc.matrix(*a, path + "/A");
    if (const Json* b = sc.field(node, path, "b")) d.b = sc.vector(*b, path + "/b");
    return d;
  }
  if (!tag.empty()) sc.fail(path + "/type", "expected \"zero\", \"constant\" or \"linear\"");
  return ZeroDrift{};
}

inline DiffusionSpec parse_diffusion(SchemaChecker& sc, const Json& node, const std::string& path) {
  if (!node.is_object()) {
    sc.fail(path, "expected an object");
    return ScalarDiffusion{1.0};
  }
  const auto tag = sc.type_tag(node, path);
  if (tag == "scalar") {
    sc.object(node, path, {"type", "sigma"});
    ScalarDiffusion d{1.0};
    if (const Json* s = sc.field(node, path, "sigma")) d.sigma = sc.number(*s, path + "/sigma");
    return d;
  }
  if (tag == "matrix") {
    sc.object(node, path, {"type", "g"});
    MatrixDiffusion d;
    if (const Json* g = sc.field(node, path, "g")) d.g = sc.matrix(*g, path + "/g");
    return d;
  }
  if (!tag.empty()) sc.fail(path + "/type", "expected \"scalar\" or \"matrix\"");
  return ScalarDiffusion{1.0};
}

inline NominalControlSpec parse_nominal(SchemaChecker& sc, const Json& node, const std::string& path) {
  if (!node.is_object()) {
    sc.fail(path, "expected an object");
    return ZeroNominal{};
  }
  const auto tag = sc.type_tag(node, path);
  if (tag == "zero") {
    sc.object(node, path, {"type"});
    return ZeroNominal{};
  }
  if (tag == "constant") {
    sc.object(node, path, {"type", "u"});
    ConstantNominal u;
    if (const Json* v = sc.field(node, path, "u")) u.u = sc.vector(*v, path + "/u");
    return u;
  }
  if (!tag.empty()) sc.fail(path + "/type", "expected \"zero\" or \"constant\"");
  return ZeroNominal{};
}

}  // namespace detail

/// Parses a game document. Schema problems are collected and thrown together
/// as SchemaViolation; semantic problems surface from GameSpec's validation.
inline GameDefinition parse_game_definition(const Json& doc, const std::string& root = "") {
  SchemaChecker sc;
  GameDefinition def;
  if (!sc.object(doc, root,
                 {"players", "horizon", "dt", "initial_state", "dynamics", "costs",
                  "nominal_controls", "alpha", "cond_bound"})) {
    sc.throw_if_failed();
  }
  std::size_t players = 0;
  if (const Json* p = sc.field(doc, root, "players")) players = sc.count(*p, root + "/players");
  if (const Json* h = sc.field(doc, root, "horizon")) {
    def.horizon = sc.number(*h, root + "/horizon", 1.0);
    if (!(def.horizon > 0.0)) sc.fail(root + "/horizon", "must be > 0");
  }
  if (const Json* d = sc.field(doc, root, "dt")) {
    def.dt = sc.number(*d, root + "/dt", 0.01);
    if (!(def.dt > 0.0)) sc.fail(root + "/dt", "must be > 0");
  }
  if (const Json* x = sc.field(doc, root, "initial_state"))
    def.initial_state = sc.vector(*x, root + "/initial_state");
  if (const Json* b = sc.field(doc, root, "cond_bound", false))
    def.cond_bound = sc.number(*b, root + "/cond_bound");
  if (const Json* dyn = sc.field(doc, root, "dynamics")) {
    const std::string path = root + "/dynamics";
    if (sc.object(*dyn, path, {"drift", "diffusion"})) {
      if (const Json* d = sc.field(*dyn, path, "drift")) def.drift = detail::parse_drift(sc, *d, path + "/drift");
      if (const Json* d = sc.field(*dyn, path, "diffusion"))
        def.diffusion = detail::parse_diffusion(sc, *d, path + "/diffusion");
    }
  }
  if (const Json* costs = sc.field(doc, root, "costs")) {
    const std::string path = root + "/costs";
    if (!costs->is_array()) {
      sc.fail(path, "expected an array");
    } else {
      for (std::size_t k = 0; k < costs->size(); ++k) {
        const std::string cp = path + "/" + std::to_string(k);
        const Json& c = (*costs)[k];
        PlayerCostSpec pc;
        if (sc.object(c, cp, {"running", "terminal"})) {
          if (const Json* r = sc.field(c, cp, "running")) pc.running = detail::parse_running(sc, *r, cp + "/running");
          if (const Json* t = sc.field(c, cp, "terminal")) pc.terminal = detail::parse_terminal(sc, *t, cp + "/terminal");
        }
        def.costs.push_back(std::move(pc));
      }
    }
  }
  if (const Json* nom = sc.field(doc, root, "nominal_controls", false)) {
    const std::string path = root + "/nominal_controls";
    if (!nom->is_array()) {
      sc.fail(path, "expected an array");
    } else {
      for (std::size_t k = 0; k < nom->size(); ++k)
        def.nominal_controls.push_back(detail::parse_nominal(sc, (*nom)[k], path + "/" + std::to_string(k)));
    }
  }
  if (const Json* a = sc.field(doc, root, "alpha")) def.alpha = sc.matrix(*a, root + "/alpha");

  if (players > 0) {
    if (def.alpha.size() != players && !def.alpha.empty())
      sc.fail(root + "/alpha", "expected " + std::to_string(players) + " rows");
    if (def.costs.size() != players)
      sc.fail(root + "/costs", "expected " + std::to_string(players) + " entries");
    if (!def.nominal_controls.empty() && def.nominal_controls.size() != players)
      sc.fail(root + "/nominal_controls", "expected " + std::to_string(players) + " entries");
  }
  sc.throw_if_failed();
  return def;
}

inline GameSpec parse_game(const Json& doc) { return GameSpec(parse_game_definition(doc)); }

inline Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::kIo, "cannot open " + path);
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw Error(Errc::kSchemaViolation, path + ": " + e.what());
  }
}

inline GameSpec load_game(const std::string& path) { return parse_game(read_json_file(path)); }

namespace detail {

inline Json center_json(const CenterPath& c) {
  if (const auto* k = std::get_if<ConstantCenter>(&c)) return {{"type", "constant"}, {"c", k->c}};
  return {{"type", "linear"}, {"c", std::get<LinearCenter>(c).c}};
}

}  // namespace detail

inline Json game_to_json(const GameDefinition& def) {
  Json doc;
  doc["players"] = def.alpha.size();
  doc["horizon"] = def.horizon;
  doc["dt"] = def.dt;
  doc["initial_state"] = def.initial_state;
  Json drift;
  if (std::holds_alternative<ZeroDrift>(def.drift)) {
    drift = {{"type", "zero"}};
  } else if (const auto* c = std::get_if<ConstantDrift>(&def.drift)) {
    drift = {{"type", "constant"}, {"b", c->b}};
  } else {
    const auto& l = std::get<LinearDrift>(def.drift);
    drift = {{"type", "linear"}, {"A", l.A}, {"b", l.b}};
  }
  Json diffusion;
  if (const auto* s = std::get_if<ScalarDiffusion>(&def.diffusion))
    diffusion = {{"type", "scalar"}, {"sigma", s->sigma}};
  else
    diffusion = {{"type", "matrix"}, {"g", std::get<MatrixDiffusion>(def.diffusion).g}};
  doc["dynamics"] = {{"drift", drift}, {"diffusion", diffusion}};
  Json costs = Json::array();
  for (const auto& c : def.costs) {
    Json running, terminal;
    if (const auto* w = std::get_if<QuadraticWellCost>(&c.running))
      running = {{"type", "quadratic_well"}, {"q", w->q}, {"center", detail::center_json(w->center)}};
    else
      running = {{"type", "zero"}};
    if (const auto* w = std::get_if<QuadraticTerminalCost>(&c.terminal))
      terminal = {{"type", "quadratic"}, {"q_T", w->q_T}, {"center", detail::center_json(w->center)}};
    else
      terminal = {{"type", "zero"}};
    costs.push_back({{"running", running}, {"terminal", terminal}});
  }
  doc["costs"] = costs;
  Json nominal = Json::array();
  for (const auto& u : def.nominal_controls) {
    if (const auto* c = std::get_if<ConstantNominal>(&u))
      nominal.push_back({{"type", "constant"}, {"u", c->u}});
    else
      nominal.push_back({{"type", "zero"}});
  }
  doc["nominal_controls"] = nominal;
  doc["alpha"] = def.alpha;
  if (def.cond_bound != kDefaultConditionBound) doc["cond_bound"] = def.cond_bound;
  return doc;
}

}  // namespace lsgame
