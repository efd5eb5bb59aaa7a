#pragma once

#include <compare>
#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fc3/chain.hpp"

namespace fc3::symbolic {

struct SymbolicError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Atom {
  std::string predicate;
  std::vector<std::string> args;

  auto operator<=>(const Atom&) const = default;
  std::string str() const;
};

/// Parses "on(a,b)" or "handempty".
Atom parse_atom(const std::string& text);

/// Sorted, duplicate-free atom ids.
using LogicState = std::vector<int>;

bool subset(const LogicState& a, const LogicState& b);  // a ⊆ b
bool intersects(const LogicState& a, const LogicState& b);
LogicState set_union(const LogicState& a, const LogicState& b);
LogicState set_minus(const LogicState& a, const LogicState& b);

struct ActionSchema {
  std::string name;
  std::vector<std::string> params;  // "?x"
  std::vector<Atom> pre, add, del;
};

struct GroundAction {
  std::string schema;
  std::vector<std::string> args;
  LogicState pre, add, del;

  std::string str() const;  // "stack(g,b)"
};

class Domain {
 public:
  int intern(const Atom& atom);
  std::optional<int> find(const Atom& atom) const;
  const Atom& atom(int id) const { return atoms_.at(static_cast<std::size_t>(id)); }
  int atom_count() const { return static_cast<int>(atoms_.size()); }

  LogicState state(const std::vector<Atom>& atoms);
  std::string describe(const LogicState& state) const;

  void add_action(GroundAction action);
  const std::vector<GroundAction>& actions() const { return actions_; }

 private:
  std::vector<Atom> atoms_;
  std::map<Atom, int> index_;
  std::vector<GroundAction> actions_;
};

/// Grounds every schema over distinct object assignments. Instances whose add
/// and delete effects overlap are skipped.
Domain ground(const std::vector<ActionSchema>& schemas, const std::vector<std::string>& objects);

bool applicable(const GroundAction& a, const LogicState& s);
LogicState apply(const GroundAction& a, const LogicState& s);

/// Goal regression: (L \ add) ∪ pre when add ∩ L ≠ ∅ and del ∩ L = ∅.
std::optional<LogicState> regress(const GroundAction& a, const LogicState& state);

struct ActionTree {
  struct Node {
    LogicState state;
    int parent = -1;  // toward the root
    int action = -1;  // index into actions(); executing it leads to the parent
    int depth = 0;
  };

  std::vector<Node> nodes;  // nodes[0] is the root (goal state)
  bool plan_found = false;
  std::vector<int> plan_nodes;  // start node .. root
  int d_I = -1;
  std::map<LogicState, int> index;

  int add_node(LogicState state, int parent, int action);
  /// Action indices along node -> root.
  std::vector<int> path_actions(int node) const;
  /// Node indices along node -> root, inclusive.
  std::vector<int> path_nodes(int node) const;
  int max_depth() const;
  std::optional<int> find(const LogicState& s) const;
};

struct TreeOptions {
  int explore = 1;  // j
  std::size_t max_nodes = 200000;
  bool prune_mutex = true;  // drop regressed states holding a pair unreachable from the initial state
};

/// Atoms and atom pairs that can hold together in some state reachable from
/// `initial` (pairwise relaxation; an over-approximation of reachability).
class PairReachability {
 public:
  PairReachability(const Domain& domain, const LogicState& initial);
  bool atom(int a) const;
  bool pair(int a, int b) const;
  bool consistent(const LogicState& s) const;

 private:
  int n_ = 0;
  std::vector<char> one_, two_;
};

/// Breadth-first backward expansion from the goal. The first node whose state is
/// contained in the initial state and whose forward execution from the initial
/// state reaches the goal fixes the plan; expansion stops at depth d_I + j.
ActionTree generate_action_tree(const Domain& domain, const LogicState& goal, const LogicState& initial,
                                const TreeOptions& options = {});

struct Verification {
  bool ok = false;
  std::vector<int> actions;  // forward plan (action indices)
  LogicState final_state;
};

/// Executes the node -> root edge actions from `start` (the node's own state
/// when absent) and checks that the result contains the root state.
Verification forward_verify(const Domain& domain, const ActionTree& tree, int node,
                            const std::optional<LogicState>& start = std::nullopt);

/// Keeps nodes within undirected tree distance r of the plan path.
ActionTree trim_action_tree(const ActionTree& tree, int r);

/// Undirected edge distance from every node to the nearest plan node.
std::vector<int> distance_to_plan(const ActionTree& tree);

struct ActionChain {
  int node = -1;
  std::vector<int> actions;  // execution order, ends at the goal
};

/// One chain per non-root node whose path forward-verifies, ordered by length
/// then insertion order.
std::vector<ActionChain> action_chains(const Domain& domain, const ActionTree& tree);

using ControllerMap = std::function<std::vector<Controller>(const GroundAction&)>;

std::vector<ControllerChain> build_controller_chains(const Domain& domain, const ActionTree& tree,
                                                     const ControllerMap& map,
                                                     const std::vector<ConstraintSpec>& goal);

}  // namespace fc3::symbolic
