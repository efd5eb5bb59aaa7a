#include "fc3/symbolic.hpp"

#include <algorithm>
#include <cctype>
#include <deque>
#include <iterator>

namespace fc3::symbolic {

std::string Atom::str() const {
  if (args.empty()) return predicate;
  std::string s = predicate + "(";
  for (std::size_t i = 0; i < args.size(); ++i) s += (i ? "," : "") + args[i];
  return s + ")";
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

bool valid_name(const std::string& s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '?' || c == '-';
  });
}

LogicState sorted_unique(LogicState s) {
  std::sort(s.begin(), s.end());
  s.erase(std::unique(s.begin(), s.end()), s.end());
  return s;
}

}  // namespace

Atom parse_atom(const std::string& text) {
  const std::string t = trim(text);
  Atom a;
  const auto open = t.find('(');
  if (open == std::string::npos) {
    a.predicate = t;
  } else {
    if (t.back() != ')') throw SymbolicError("malformed atom '" + text + "'");
    a.predicate = trim(t.substr(0, open));
    const std::string inner = t.substr(open + 1, t.size() - open - 2);
    std::size_t start = 0;
    while (start <= inner.size()) {
      const auto comma = inner.find(',', start);
      const std::string arg = trim(inner.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
      if (!valid_name(arg)) throw SymbolicError("malformed atom '" + text + "'");
      a.args.push_back(arg);
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
  }
  if (!valid_name(a.predicate)) throw SymbolicError("malformed atom '" + text + "'");
  return a;
}

bool subset(const LogicState& a, const LogicState& b) { return std::includes(b.begin(), b.end(), a.begin(), a.end()); }

bool intersects(const LogicState& a, const LogicState& b) {
  auto i = a.begin();
  auto j = b.begin();
  while (i != a.end() && j != b.end()) {
    if (*i == *j) return true;
    if (*i < *j)
      ++i;
    else
      ++j;
  }
  return false;
}

LogicState set_union(const LogicState& a, const LogicState& b) {
  LogicState out;
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

LogicState set_minus(const LogicState& a, const LogicState& b) {
  LogicState out;
  std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

std::string GroundAction::str() const { return Atom{schema, args}.str(); }

int Domain::intern(const Atom& atom) {
  const auto [it, inserted] = index_.try_emplace(atom, static_cast<int>(atoms_.size()));
  if (inserted) atoms_.push_back(atom);
  return it->second;
}

std::optional<int> Domain::find(const Atom& atom) const {
  const auto it = index_.find(atom);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

LogicState Domain::state(const std::vector<Atom>& atoms) {
  LogicState s;
  for (const auto& a : atoms) s.push_back(intern(a));
  return sorted_unique(std::move(s));
}

std::string Domain::describe(const LogicState& state) const {
  std::vector<std::string> names;
  for (int id : state) names.push_back(atom(id).str());
  std::sort(names.begin(), names.end());
  std::string s = "{";
  for (std::size_t i = 0; i < names.size(); ++i) s += (i ? ", " : "") + names[i];
  return s + "}";
}

void Domain::add_action(GroundAction action) {
  action.pre = sorted_unique(std::move(action.pre));
  action.add = sorted_unique(std::move(action.add));
  action.del = sorted_unique(std::move(action.del));
  actions_.push_back(std::move(action));
}

Domain ground(const std::vector<ActionSchema>& schemas, const std::vector<std::string>& objects) {
  Domain d;
  for (const auto& schema : schemas) {
    const std::size_t k = schema.params.size();
    if (k > objects.size()) continue;
    std::vector<std::size_t> pick(k, 0);
    auto substitute = [&](const std::vector<Atom>& atoms) {
      LogicState s;
      for (const auto& a : atoms) {
        Atom g = a;
        for (auto& arg : g.args) {
          const auto it = std::find(schema.params.begin(), schema.params.end(), arg);
          if (it != schema.params.end()) arg = objects[pick[static_cast<std::size_t>(it - schema.params.begin())]];
        }
        s.push_back(d.intern(g));
      }
      return sorted_unique(std::move(s));
    };
    while (true) {
      std::vector<std::size_t> sorted = pick;
      std::sort(sorted.begin(), sorted.end());
      if (std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end()) {
        GroundAction a;
        a.schema = schema.name;
        for (std::size_t i : pick) a.args.push_back(objects[i]);
        a.pre = substitute(schema.pre);
        a.add = substitute(schema.add);
        a.del = substitute(schema.del);
        if (!intersects(a.add, a.del)) d.add_action(std::move(a));
      }
      std::size_t i = 0;
      for (; i < k; ++i) {
        if (++pick[i] < objects.size()) break;
        pick[i] = 0;
      }
      if (i == k) break;
    }
  }
  return d;
}

bool applicable(const GroundAction& a, const LogicState& s) { return subset(a.pre, s); }

LogicState apply(const GroundAction& a, const LogicState& s) { return set_union(set_minus(s, a.del), a.add); }

std::optional<LogicState> regress(const GroundAction& a, const LogicState& state) {
  if (!intersects(state, a.add) || intersects(state, a.del)) return std::nullopt;
  return set_union(set_minus(state, a.add), a.pre);
}

int ActionTree::add_node(LogicState state, int parent, int action) {
  const int id = static_cast<int>(nodes.size());
  const int depth = parent < 0 ? 0 : nodes.at(static_cast<std::size_t>(parent)).depth + 1;
  index.emplace(state, id);
  nodes.push_back({std::move(state), parent, action, depth});
  return id;
}

std::vector<int> ActionTree::path_actions(int node) const {
  std::vector<int> out;
  for (int n = node; nodes[static_cast<std::size_t>(n)].parent >= 0; n = nodes[static_cast<std::size_t>(n)].parent)
    out.push_back(nodes[static_cast<std::size_t>(n)].action);
  return out;
}

std::vector<int> ActionTree::path_nodes(int node) const {
  std::vector<int> out;
  for (int n = node; n >= 0; n = nodes[static_cast<std::size_t>(n)].parent) out.push_back(n);
  return out;
}

int ActionTree::max_depth() const {
  int d = 0;
  for (const auto& n : nodes) d = std::max(d, n.depth);
  return d;
}

std::optional<int> ActionTree::find(const LogicState& s) const {
  const auto it = index.find(s);
  if (it == index.end()) return std::nullopt;
  return it->second;
}

Verification forward_verify(const Domain& domain, const ActionTree& tree, int node,
                            const std::optional<LogicState>& start) {
  Verification v;
  LogicState s = start ? *start : tree.nodes.at(static_cast<std::size_t>(node)).state;
  for (int a : tree.path_actions(node)) {
    const auto& act = domain.actions().at(static_cast<std::size_t>(a));
    if (!applicable(act, s)) {
      v.final_state = s;
      return v;
    }
    s = symbolic::apply(act, s);
    v.actions.push_back(a);
  }
  v.ok = subset(tree.nodes.front().state, s);
  v.final_state = std::move(s);
  return v;
}

PairReachability::PairReachability(const Domain& domain, const LogicState& initial)
    : n_(domain.atom_count()), one_(static_cast<std::size_t>(n_), 0), two_(static_cast<std::size_t>(n_ * n_), 0) {
  auto set_pair = [&](int a, int b) {
    char& x = two_[static_cast<std::size_t>(a * n_ + b)];
    if (x) return false;
    x = 1;
    two_[static_cast<std::size_t>(b * n_ + a)] = 1;
    return true;
  };
  for (int a : initial) {
    one_[static_cast<std::size_t>(a)] = 1;
    for (int b : initial) set_pair(a, b);
  }
  for (bool changed = true; changed;) {
    changed = false;
    for (const auto& act : domain.actions()) {
      if (!consistent(act.pre)) continue;
      for (int p : act.add) {
        if (!one_[static_cast<std::size_t>(p)]) one_[static_cast<std::size_t>(p)] = changed = true;
        for (int q : act.add) changed |= set_pair(p, q);
      }
      // Atoms untouched by the action persist next to its add effects.
      for (int r = 0; r < n_; ++r) {
        if (!one_[static_cast<std::size_t>(r)] || std::binary_search(act.del.begin(), act.del.end(), r) ||
            std::binary_search(act.add.begin(), act.add.end(), r))
          continue;
        if (!std::all_of(act.pre.begin(), act.pre.end(), [&](int q) { return pair(r, q); })) continue;
        for (int p : act.add) changed |= set_pair(p, r);
      }
    }
  }
}

bool PairReachability::atom(int a) const { return a < n_ && one_[static_cast<std::size_t>(a)]; }

bool PairReachability::pair(int a, int b) const {
  return a < n_ && b < n_ && two_[static_cast<std::size_t>(a * n_ + b)];
}

bool PairReachability::consistent(const LogicState& s) const {
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t k = i; k < s.size(); ++k)
      if (!pair(s[i], s[k])) return false;
  return true;
}

ActionTree generate_action_tree(const Domain& domain, const LogicState& goal, const LogicState& initial,
                                const TreeOptions& options) {
  ActionTree tree;
  tree.add_node(goal, -1, -1);
  const auto& actions = domain.actions();
  std::optional<PairReachability> reach;
  if (options.prune_mutex) reach.emplace(domain, initial);
  for (std::size_t head = 0; head < tree.nodes.size(); ++head) {
    const int n = static_cast<int>(head);
    if (!tree.plan_found && subset(tree.nodes[head].state, initial) &&
        forward_verify(domain, tree, n, initial).ok) {
      tree.plan_found = true;
      tree.plan_nodes = tree.path_nodes(n);
      tree.d_I = tree.nodes[head].depth;
    }
    if (tree.plan_found && tree.nodes[head].depth >= tree.d_I + options.explore) continue;
    for (std::size_t a = 0; a < actions.size() && tree.nodes.size() < options.max_nodes; ++a) {
      auto next = regress(actions[a], tree.nodes[head].state);
      if (!next || tree.index.contains(*next) || (reach && !reach->consistent(*next))) continue;
      tree.add_node(std::move(*next), n, static_cast<int>(a));
    }
  }
  if (!tree.plan_found) return tree;

  // Children of depth-d_I nodes expanded before the plan was fixed may exceed the bound.
  const int bound = tree.d_I + options.explore;
  if (tree.max_depth() <= bound) return tree;
  ActionTree out;
  std::vector<int> remap(tree.nodes.size(), -1);
  for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
    const auto& node = tree.nodes[i];
    if (node.depth > bound) continue;
    remap[i] = out.add_node(node.state, node.parent < 0 ? -1 : remap[static_cast<std::size_t>(node.parent)],
                            node.action);
  }
  out.plan_found = true;
  out.d_I = tree.d_I;
  for (int p : tree.plan_nodes) out.plan_nodes.push_back(remap[static_cast<std::size_t>(p)]);
  return out;
}

std::vector<int> distance_to_plan(const ActionTree& tree) {
  if (!tree.plan_found) throw SymbolicError("action tree has no verified plan");
  const std::size_t n = tree.nodes.size();
  std::vector<std::vector<int>> adj(n);
  for (std::size_t i = 1; i < n; ++i) {
    const int p = tree.nodes[i].parent;
    adj[i].push_back(p);
    adj[static_cast<std::size_t>(p)].push_back(static_cast<int>(i));
  }
  std::vector<int> dist(n, -1);
  std::deque<int> queue;
  for (int p : tree.plan_nodes) {
    dist[static_cast<std::size_t>(p)] = 0;
    queue.push_back(p);
  }
  while (!queue.empty()) {
    const int u = queue.front();
    queue.pop_front();
    for (int v : adj[static_cast<std::size_t>(u)]) {
      if (dist[static_cast<std::size_t>(v)] >= 0) continue;
      dist[static_cast<std::size_t>(v)] = dist[static_cast<std::size_t>(u)] + 1;
      queue.push_back(v);
    }
  }
  return dist;
}

ActionTree trim_action_tree(const ActionTree& tree, int r) {
  const auto dist = distance_to_plan(tree);
  ActionTree out;
  std::vector<int> remap(tree.nodes.size(), -1);
  for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
    if (dist[i] > r) continue;
    const auto& node = tree.nodes[i];
    // An off-path node reaches the plan through its parent, so the parent is kept too.
    remap[i] = out.add_node(node.state, node.parent < 0 ? -1 : remap[static_cast<std::size_t>(node.parent)],
                            node.action);
  }
  out.plan_found = true;
  out.d_I = tree.d_I;
  for (int p : tree.plan_nodes) out.plan_nodes.push_back(remap[static_cast<std::size_t>(p)]);
  return out;
}

std::vector<ActionChain> action_chains(const Domain& domain, const ActionTree& tree) {
  std::vector<ActionChain> chains;
  for (std::size_t i = 1; i < tree.nodes.size(); ++i) {
    const int n = static_cast<int>(i);
    if (!forward_verify(domain, tree, n).ok) continue;
    chains.push_back({n, tree.path_actions(n)});
  }
  std::stable_sort(chains.begin(), chains.end(),
                   [](const ActionChain& a, const ActionChain& b) { return a.actions.size() < b.actions.size(); });
  return chains;
}

std::vector<ControllerChain> build_controller_chains(const Domain& domain, const ActionTree& tree,
                                                     const ControllerMap& map,
                                                     const std::vector<ConstraintSpec>& goal) {
  std::vector<ControllerChain> out;
  for (const auto& ac : action_chains(domain, tree)) {
    ControllerChain chain;
    chain.goal = goal;
    for (int a : ac.actions) {
      const auto& action = domain.actions()[static_cast<std::size_t>(a)];
      auto controllers = map(action);
      if (controllers.empty()) throw SymbolicError("action " + action.str() + " maps to no controller");
      for (auto& c : controllers) chain.controllers.push_back(std::move(c));
      chain.source.push_back(action.str());
    }
    out.push_back(std::move(chain));
  }
  return out;
}

}  // namespace fc3::symbolic
