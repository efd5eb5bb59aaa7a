#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "fc3/scenario.hpp"

namespace fc3 {

using nlohmann::json;

namespace {

class Reader {
 public:
  std::vector<std::string> problems;

  void fail(const std::string& path, const std::string& msg) { problems.push_back(path + ": " + msg); }

  bool object(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) {
      fail(path, "expected an object");
      return false;
    }
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [k, v] : j.items())
      if (!ok.contains(k)) fail(path, "unknown key '" + k + "'");
    return true;
  }

  const json* field(const json& j, const char* key, const std::string& path, bool required) {
    if (!j.is_object() || !j.contains(key)) {
      if (required) fail(path, std::string("missing key '") + key + "'");
      return nullptr;
    }
    return &j.at(key);
  }

  std::string str(const json& j, const char* key, const std::string& path, bool required = true,
                  std::string fallback = {}) {
    const json* v = field(j, key, path, required);
    if (!v) return fallback;
    if (v->is_null() && !required) return fallback;
    if (!v->is_string()) {
      fail(path + "." + key, "expected a string");
      return fallback;
    }
    return v->get<std::string>();
  }

  double num(const json& j, const char* key, const std::string& path, bool required = true, double fallback = 0.0) {
    const json* v = field(j, key, path, required);
    if (!v) return fallback;
    if (!v->is_number()) {
      fail(path + "." + key, "expected a number");
      return fallback;
    }
    return v->get<double>();
  }

  int integer(const json& j, const char* key, const std::string& path, int fallback) {
    const json* v = field(j, key, path, false);
    if (!v) return fallback;
    if (!v->is_number_integer()) {
      fail(path + "." + key, "expected an integer");
      return fallback;
    }
    return v->get<int>();
  }

  std::vector<double> numbers(const json& j, const std::string& path, std::size_t min_size = 0,
                              std::size_t max_size = 1000) {
    std::vector<double> out;
    if (!j.is_array()) {
      fail(path, "expected an array of numbers");
      return out;
    }
    for (const auto& v : j) {
      if (!v.is_number()) {
        fail(path, "expected an array of numbers");
        return {};
      }
      out.push_back(v.get<double>());
    }
    if (out.size() < min_size || out.size() > max_size)
      fail(path, "expected " + (min_size == max_size ? std::to_string(min_size) : std::to_string(min_size) + ".." +
                                                                                     std::to_string(max_size)) +
                     " numbers");
    return out;
  }

  std::vector<std::string> strings(const json& j, const char* key, const std::string& path, bool required = false) {
    std::vector<std::string> out;
    const json* v = field(j, key, path, required);
    if (!v) return out;
    if (!v->is_array()) {
      fail(path + "." + key, "expected an array of strings");
      return out;
    }
    for (const auto& s : *v) {
      if (!s.is_string()) {
        fail(path + "." + key, "expected an array of strings");
        return {};
      }
      out.push_back(s.get<std::string>());
    }
    return out;
  }

  template <class F>
  void each(const json& j, const char* key, const std::string& path, bool required, F&& f) {
    const json* v = field(j, key, path, required);
    if (!v) return;
    if (!v->is_array()) {
      fail(path + "." + key, "expected an array");
      return;
    }
    for (std::size_t i = 0; i < v->size(); ++i) f((*v)[i], path + "." + key + "[" + std::to_string(i) + "]");
  }

  Pose2d pose(const json& j, const std::string& path) {
    const auto v = numbers(j, path, 2, 3);
    if (v.size() < 2) return {};
    return Pose2d(v[0], v[1], v.size() > 2 ? v[2] : 0.0);
  }

  Shape shape(const json& j, const std::string& path) {
    if (!object(j, path, {"kind", "radius", "width", "height", "long", "short"})) return {};
    const std::string kind = str(j, "kind", path);
    if (kind == "none") return Shape::none();
    if (kind == "disk") {
      const double r = num(j, "radius", path);
      if (!(r > 0)) fail(path + ".radius", "must be positive");
      return Shape::disk(r);
    }
    if (kind == "box") return Shape::box(num(j, "width", path), num(j, "height", path));
    if (kind == "hook") return Shape::hook(num(j, "long", path), num(j, "short", path));
    fail(path + ".kind", "unknown shape '" + kind + "'");
    return {};
  }

  FeatureTemplate feature(const json& j, const std::string& path) {
    FeatureTemplate f;
    if (!object(j, path, {"kind", "a", "b", "target", "margin", "angle"})) return f;
    f.kind = str(j, "kind", path);
    static const std::set<std::string> kinds{"position_diff", "distance", "alignment", "pose_equality",
                                             "joint_limits"};
    if (!f.kind.empty() && !kinds.contains(f.kind)) fail(path + ".kind", "unknown feature kind '" + f.kind + "'");
    const bool pair = f.kind != "joint_limits";
    f.a = str(j, "a", path, pair);
    f.b = str(j, "b", path, pair);
    if (const json* t = field(j, "target", path, false)) {
      const auto v = numbers(*t, path + ".target", 2, 2);
      if (v.size() == 2) f.target = {v[0], v[1]};
    }
    f.margin = num(j, "margin", path, false);
    f.angle = num(j, "angle", path, false);
    return f;
  }

  Comparator comparator(const json& j, const std::string& path) {
    const std::string c = str(j, "comparator", path, false, "eq");
    if (c == "eq") return Comparator::eq;
    if (c == "ineq") return Comparator::ineq;
    fail(path + ".comparator", "expected 'eq' or 'ineq'");
    return Comparator::eq;
  }

  ConstraintTemplate constraint(const json& j, const std::string& path) {
    ConstraintTemplate c;
    if (!object(j, path, {"feature", "comparator", "epsilon", "scale", "label", "for_each"})) return c;
    if (const json* f = field(j, "feature", path, true)) c.feature = feature(*f, path + ".feature");
    c.comparator = comparator(j, path);
    if (field(j, "epsilon", path, false)) {
      c.epsilon = num(j, "epsilon", path);
      if (!(*c.epsilon > 0)) fail(path + ".epsilon", "must be positive");
    }
    c.scale = num(j, "scale", path, false, 1.0);
    c.label = str(j, "label", path, false);
    if (const json* fe = field(j, "for_each", path, false)) {
      const std::string p = path + ".for_each";
      if (object(*fe, p, {"var", "exclude"})) c.for_each = ForEach{str(*fe, "var", p), strings(*fe, "exclude", p)};
    }
    return c;
  }

  Signal::Kind signal_kind(const std::string& s, const std::string& path) {
    if (s == "grasp") return Signal::Kind::grasp;
    if (s == "place") return Signal::Kind::place;
    if (s == "none") return Signal::Kind::none;
    fail(path, "unknown signal '" + s + "'");
    return Signal::Kind::none;
  }

  ControllerTemplate controller(const json& j, const std::string& path) {
    ControllerTemplate c;
    if (!object(j, path, {"costs", "constraints", "signal", "logic"})) return c;
    each(j, "costs", path, false, [&](const json& e, const std::string& p) {
      CostTemplate t;
      if (!object(e, p, {"feature", "weight", "label"})) return;
      if (const json* f = field(e, "feature", p, true)) t.feature = feature(*f, p + ".feature");
      t.weight = num(e, "weight", p, false, 1.0);
      if (!(t.weight > 0)) fail(p + ".weight", "must be positive");
      t.label = str(e, "label", p, false);
      c.costs.push_back(std::move(t));
    });
    each(j, "constraints", path, false,
         [&](const json& e, const std::string& p) { c.constraints.push_back(constraint(e, p)); });
    if (const json* s = field(j, "signal", path, false)) {
      const std::string p = path + ".signal";
      if (object(*s, p, {"kind", "holder", "object"})) {
        c.signal.kind = signal_kind(str(*s, "kind", p), p + ".kind");
        c.signal.holder = str(*s, "holder", p, c.signal.kind != Signal::Kind::none);
        c.signal.object = str(*s, "object", p, c.signal.kind == Signal::Kind::grasp);
      }
    }
    each(j, "logic", path, false, [&](const json& e, const std::string& p) {
      if (!object(e, p, {"holder", "object"})) return;
      c.logic.push_back({str(e, "holder", p), str(e, "object", p, false)});
    });
    return c;
  }

  EffectSpec effect(const json& j, const std::string& path) {
    EffectSpec e;
    if (!object(j, path, {"kind", "object", "x", "y", "theta", "dx", "dy", "onto"})) return e;
    const std::string kind = str(j, "kind", path);
    e.object = str(j, "object", path);
    if (kind == "teleport") {
      e.kind = EffectSpec::Kind::teleport;
      e.keep_theta = !j.contains("theta");
      e.pose = Pose2d(num(j, "x", path), num(j, "y", path), num(j, "theta", path, false));
    } else if (kind == "shift") {
      e.kind = EffectSpec::Kind::shift;
      e.delta = {num(j, "dx", path, false), num(j, "dy", path, false)};
    } else if (kind == "stack_on") {
      e.kind = EffectSpec::Kind::stack_on;
      e.onto = str(j, "onto", path);
    } else {
      fail(path + ".kind", "unknown effect '" + kind + "'");
    }
    return e;
  }

  TriggerSpec trigger(const json& j, const std::string& path) {
    TriggerSpec t;
    if (!object(j, path, {"kind", "time", "controller", "delay", "signal", "object"})) return t;
    const std::string kind = str(j, "kind", path);
    if (kind == "at_time") {
      t.kind = TriggerSpec::Kind::at_time;
      t.time = num(j, "time", path);
    } else if (kind == "controller_entered") {
      t.kind = TriggerSpec::Kind::controller_entered;
      t.controller = str(j, "controller", path);
      t.delay = num(j, "delay", path, false);
      if (t.delay < 0) fail(path + ".delay", "must be non-negative");
    } else if (kind == "signal") {
      t.kind = TriggerSpec::Kind::signal;
      t.signal = signal_kind(str(j, "signal", path), path + ".signal");
      t.object = str(j, "object", path, false);
    } else if (kind == "manual") {
      t.kind = TriggerSpec::Kind::manual;
    } else {
      fail(path + ".kind", "unknown trigger '" + kind + "'");
    }
    return t;
  }
};

json pose_json(const Pose2d& p) { return json::array({p.t.x(), p.t.y(), p.theta}); }

json shape_json(const Shape& s) {
  switch (s.kind) {
    case Shape::Kind::none:
      return {{"kind", "none"}};
    case Shape::Kind::disk:
      return {{"kind", "disk"}, {"radius", s.a}};
    case Shape::Kind::box:
      return {{"kind", "box"}, {"width", s.a}, {"height", s.b}};
    case Shape::Kind::hook:
      return {{"kind", "hook"}, {"long", s.a}, {"short", s.b}};
  }
  return {};
}

json feature_json(const FeatureTemplate& f) {
  json j{{"kind", f.kind}};
  if (f.kind == "joint_limits") return j;
  j["a"] = f.a;
  j["b"] = f.b;
  if (f.kind == "position_diff" && !f.target.isZero()) j["target"] = {f.target.x(), f.target.y()};
  if (f.kind == "distance" && f.margin != 0.0) j["margin"] = f.margin;
  if (f.kind == "alignment" && f.angle != 0.0) j["angle"] = f.angle;
  return j;
}

json constraint_json(const ConstraintTemplate& c) {
  json j{{"feature", feature_json(c.feature)}, {"comparator", c.comparator == Comparator::eq ? "eq" : "ineq"}};
  if (c.epsilon) j["epsilon"] = *c.epsilon;
  if (c.scale != 1.0) j["scale"] = c.scale;
  if (!c.label.empty()) j["label"] = c.label;
  if (c.for_each) j["for_each"] = {{"var", c.for_each->var}, {"exclude", c.for_each->exclude}};
  return j;
}

json effect_json(const EffectSpec& e) {
  switch (e.kind) {
    case EffectSpec::Kind::teleport: {
      json j{{"kind", "teleport"}, {"object", e.object}, {"x", e.pose.t.x()}, {"y", e.pose.t.y()}};
      if (!e.keep_theta) j["theta"] = e.pose.theta;
      return j;
    }
    case EffectSpec::Kind::shift:
      return {{"kind", "shift"}, {"object", e.object}, {"dx", e.delta.x()}, {"dy", e.delta.y()}};
    case EffectSpec::Kind::stack_on:
      return {{"kind", "stack_on"}, {"object", e.object}, {"onto", e.onto}};
  }
  return {};
}

json trigger_json(const TriggerSpec& t) {
  switch (t.kind) {
    case TriggerSpec::Kind::at_time:
      return {{"kind", "at_time"}, {"time", t.time}};
    case TriggerSpec::Kind::controller_entered:
      return {{"kind", "controller_entered"}, {"controller", t.controller}, {"delay", t.delay}};
    case TriggerSpec::Kind::signal: {
      json j{{"kind", "signal"}, {"signal", to_string(t.signal)}};
      if (!t.object.empty()) j["object"] = t.object;
      return j;
    }
    case TriggerSpec::Kind::manual:
      return {{"kind", "manual"}};
  }
  return {};
}

}  // namespace

ScenarioSpec parse_scenario(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ScenarioError({std::string("malformed JSON: ") + e.what()});
  }
  Reader r;
  ScenarioSpec s;
  const std::string top = "$";
  if (!r.object(root, top,
                {"name", "description", "world", "domain", "controllers", "goal", "params", "interferences"}))
    throw ScenarioError(r.problems);
  s.name = r.str(root, "name", top);
  s.description = r.str(root, "description", top, false);

  if (const json* w = r.field(root, "world", top, true)) {
    const std::string wp = "$.world";
    if (r.object(*w, wp, {"arms", "objects", "frames"})) {
      r.each(*w, "arms", wp, true, [&](const json& j, const std::string& p) {
        if (!r.object(j, p, {"name", "base", "links", "limits", "initial"})) return;
        ArmSpec a;
        a.name = r.str(j, "name", p);
        if (const json* b = r.field(j, "base", p, true)) a.base = r.pose(*b, p + ".base");
        if (const json* l = r.field(j, "links", p, true)) a.links = r.numbers(*l, p + ".links", 1);
        if (const json* l = r.field(j, "limits", p, false)) {
          const auto v = r.numbers(*l, p + ".limits", 2, 2);
          if (v.size() == 2) a.limits = {v[0], v[1]};
        }
        if (const json* q = r.field(j, "initial", p, false)) a.initial = r.numbers(*q, p + ".initial");
        s.arms.push_back(std::move(a));
      });
      r.each(*w, "objects", wp, false, [&](const json& j, const std::string& p) {
        if (!r.object(j, p, {"name", "shape", "pose"})) return;
        ObjectSpec o;
        o.name = r.str(j, "name", p);
        if (const json* sh = r.field(j, "shape", p, true)) o.shape = r.shape(*sh, p + ".shape");
        if (const json* ps = r.field(j, "pose", p, true)) o.pose = r.pose(*ps, p + ".pose");
        s.objects.push_back(std::move(o));
      });
      r.each(*w, "frames", wp, false, [&](const json& j, const std::string& p) {
        if (!r.object(j, p, {"name", "parent", "offset", "shape"})) return;
        FrameSpec f;
        f.name = r.str(j, "name", p);
        f.parent = r.str(j, "parent", p, false, "world");
        if (const json* o = r.field(j, "offset", p, true)) f.offset = r.pose(*o, p + ".offset");
        if (const json* sh = r.field(j, "shape", p, false)) f.shape = r.shape(*sh, p + ".shape");
        s.frames.push_back(std::move(f));
      });
    }
  }

  if (const json* d = r.field(root, "domain", top, true)) {
    const std::string dp = "$.domain";
    if (r.object(*d, dp, {"objects", "actions", "init", "goal"})) {
      s.domain_objects = r.strings(*d, "objects", dp);
      s.init = r.strings(*d, "init", dp, true);
      s.goal_atoms = r.strings(*d, "goal", dp, true);
      r.each(*d, "actions", dp, true, [&](const json& j, const std::string& p) {
        if (!r.object(j, p, {"name", "params", "pre", "add", "del", "controllers"})) return;
        ActionTemplate a;
        a.schema.name = r.str(j, "name", p);
        a.schema.params = r.strings(j, "params", p);
        for (const auto& token : a.schema.params)
          if (token.size() < 2 || token[0] != '?') r.fail(p + ".params", "parameter '" + token + "' must start with '?'");
        auto atoms = [&](const char* key) {
          std::vector<symbolic::Atom> out;
          for (const auto& t : r.strings(j, key, p)) {
            try {
              out.push_back(symbolic::parse_atom(t));
            } catch (const symbolic::SymbolicError& e) {
              r.fail(p + "." + key, e.what());
            }
          }
          return out;
        };
        a.schema.pre = atoms("pre");
        a.schema.add = atoms("add");
        a.schema.del = atoms("del");
        a.controllers = r.strings(j, "controllers", p, true);
        s.actions.push_back(std::move(a));
      });
    }
  }

  if (const json* c = r.field(root, "controllers", top, true)) {
    if (!c->is_object()) {
      r.fail("$.controllers", "expected an object");
    } else {
      for (const auto& [key, value] : c->items())
        s.controllers[key] = r.controller(value, "$.controllers." + key);
    }
  }

  r.each(root, "goal", top, true,
         [&](const json& j, const std::string& p) { s.goal.push_back(r.constraint(j, p)); });

  if (const json* pj = r.field(root, "params", top, false)) {
    const std::string pp = "$.params";
    if (r.object(*pj, pp,
                 {"explore", "trim", "tau", "n_check", "eps_feas", "timeout", "jitter", "recheck_motion",
                  "velocity_limit"})) {
      auto& p = s.params;
      p.explore = r.integer(*pj, "explore", pp, p.explore);
      p.trim = r.integer(*pj, "trim", pp, p.trim);
      p.tau = r.num(*pj, "tau", pp, false, p.tau);
      p.n_check = r.integer(*pj, "n_check", pp, p.n_check);
      p.eps_feas = r.num(*pj, "eps_feas", pp, false, p.eps_feas);
      p.timeout = r.num(*pj, "timeout", pp, false, p.timeout);
      p.jitter = r.num(*pj, "jitter", pp, false, p.jitter);
      p.recheck_motion = r.num(*pj, "recheck_motion", pp, false, p.recheck_motion);
      p.velocity_limit = r.num(*pj, "velocity_limit", pp, false, p.velocity_limit);
    }
  }

  r.each(root, "interferences", top, false, [&](const json& j, const std::string& p) {
    if (!r.object(j, p, {"id", "description", "initial", "events"})) return;
    InterferenceSpec in;
    in.id = r.str(j, "id", p);
    in.description = r.str(j, "description", p, false);
    r.each(j, "initial", p, false, [&](const json& e, const std::string& ep) { in.initial.push_back(r.effect(e, ep)); });
    r.each(j, "events", p, false, [&](const json& e, const std::string& ep) {
      if (!r.object(e, ep, {"trigger", "effects"})) return;
      EventSpec ev;
      if (const json* t = r.field(e, "trigger", ep, true)) ev.trigger = r.trigger(*t, ep + ".trigger");
      r.each(e, "effects", ep, true,
             [&](const json& x, const std::string& xp) { ev.effects.push_back(r.effect(x, xp)); });
      in.events.push_back(std::move(ev));
    });
    s.interferences.push_back(std::move(in));
  });

  if (!r.problems.empty()) throw ScenarioError(r.problems);
  return s;
}

std::string dump_scenario(const ScenarioSpec& s) {
  json root;
  root["name"] = s.name;
  if (!s.description.empty()) root["description"] = s.description;
  json arms = json::array(), objects = json::array(), frames = json::array();
  for (const auto& a : s.arms) {
    json j{{"name", a.name}, {"base", pose_json(a.base)}, {"links", a.links}, {"limits", {a.limits.lo, a.limits.hi}}};
    if (!a.initial.empty()) j["initial"] = a.initial;
    arms.push_back(j);
  }
  for (const auto& o : s.objects) objects.push_back({{"name", o.name}, {"shape", shape_json(o.shape)}, {"pose", pose_json(o.pose)}});
  for (const auto& f : s.frames)
    frames.push_back({{"name", f.name}, {"parent", f.parent}, {"offset", pose_json(f.offset)}, {"shape", shape_json(f.shape)}});
  root["world"] = {{"arms", arms}, {"objects", objects}, {"frames", frames}};

  json actions = json::array();
  for (const auto& a : s.actions) {
    auto strs = [](const std::vector<symbolic::Atom>& atoms) {
      std::vector<std::string> out;
      for (const auto& x : atoms) out.push_back(x.str());
      return out;
    };
    actions.push_back({{"name", a.schema.name},
                       {"params", a.schema.params},
                       {"pre", strs(a.schema.pre)},
                       {"add", strs(a.schema.add)},
                       {"del", strs(a.schema.del)},
                       {"controllers", a.controllers}});
  }
  root["domain"] = {{"objects", s.domain_objects}, {"actions", actions}, {"init", s.init}, {"goal", s.goal_atoms}};

  json controllers = json::object();
  for (const auto& [key, c] : s.controllers) {
    json j = json::object();
    if (!c.costs.empty()) {
      json costs = json::array();
      for (const auto& t : c.costs) {
        json x{{"feature", feature_json(t.feature)}, {"weight", t.weight}};
        if (!t.label.empty()) x["label"] = t.label;
        costs.push_back(x);
      }
      j["costs"] = costs;
    }
    json cons = json::array();
    for (const auto& g : c.constraints) cons.push_back(constraint_json(g));
    j["constraints"] = cons;
    if (c.signal.kind != Signal::Kind::none) {
      json sig{{"kind", to_string(c.signal.kind)}, {"holder", c.signal.holder}};
      if (c.signal.kind == Signal::Kind::grasp) sig["object"] = c.signal.object;
      j["signal"] = sig;
    }
    json logic = json::array();
    for (const auto& l : c.logic)
      logic.push_back({{"holder", l.holder}, {"object", l.object.empty() ? json(nullptr) : json(l.object)}});
    j["logic"] = logic;
    controllers[key] = j;
  }
  root["controllers"] = controllers;

  json goal = json::array();
  for (const auto& g : s.goal) goal.push_back(constraint_json(g));
  root["goal"] = goal;

  const auto& p = s.params;
  root["params"] = {{"explore", p.explore},   {"trim", p.trim},
                    {"tau", p.tau},           {"n_check", p.n_check},
                    {"eps_feas", p.eps_feas}, {"timeout", p.timeout},
                    {"jitter", p.jitter},     {"recheck_motion", p.recheck_motion},
                    {"velocity_limit", p.velocity_limit}};

  json interferences = json::array();
  for (const auto& in : s.interferences) {
    json j{{"id", in.id}};
    if (!in.description.empty()) j["description"] = in.description;
    json initial = json::array();
    for (const auto& e : in.initial) initial.push_back(effect_json(e));
    json events = json::array();
    for (const auto& ev : in.events) {
      json effects = json::array();
      for (const auto& e : ev.effects) effects.push_back(effect_json(e));
      events.push_back({{"trigger", trigger_json(ev.trigger)}, {"effects", effects}});
    }
    j["initial"] = initial;
    j["events"] = events;
    interferences.push_back(j);
  }
  root["interferences"] = interferences;
  return root.dump(2) + "\n";
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError({path + ": cannot open file"});
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return instantiate(parse_scenario(buf.str()));
  } catch (const ScenarioError& e) {
    std::vector<std::string> problems;
    for (const auto& p : e.problems()) problems.push_back(path + ": " + p);
    throw ScenarioError(std::move(problems));
  }
}

}  // namespace fc3
