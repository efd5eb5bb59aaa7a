#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fc3/sim.hpp"

namespace fc3 {

enum class System { fc3, rgds, linear };
enum class Status { running, success, infeasible, timeout };

const char* to_string(System s);
const char* to_string(Status s);
System parse_system(const std::string& s);

struct ExecutorSettings {
  SequenceSettings sequence{};
  int n_check = 10;
  double recheck_motion = 0.05;
};

ExecutorSettings executor_settings(const ScenarioParams& params);

/// What the executor wants the world to do this tick.
struct Action {
  enum class Kind { hold, step, fire };
  Kind kind = Kind::hold;
  VectorXd reference;                  // step
  const Controller* fire = nullptr;   // fire
};

/// Chain selection and switching over a controller-chain library.
///
/// fc3 re-selects chains whenever the active one loses sequence feasibility;
/// rgds selects once and only moves within its chain; linear executes its
/// chain in order and waits when a precondition breaks.
class Executor {
 public:
  Executor(const Scene& scene, std::vector<ControllerChain> library, std::vector<ConstraintSpec> goal, System system,
           ExecutorSettings settings);

  /// Decides this tick's action from the current state.
  Action tick(const KinematicState& state);
  /// The last fired signal failed: the controller is entered again.
  void fire_failed(const KinematicState& state);
  /// Forgets the active chain (the next tick selects again).
  void reset();

  System system() const { return system_; }
  Status status() const { return status_; }
  int active_chain() const { return chain_; }
  int active_index() const { return index_; }
  bool chain_feasible() const { return feasible_; }
  int switches() const { return switches_; }
  const std::string& last_event() const { return last_event_; }
  /// Controller names in entry order (repeated entries of the same controller collapse).
  const std::vector<std::string>& entered() const { return entered_; }
  /// Controller entered during the last tick, if any.
  const std::optional<std::string>& just_entered() const { return just_entered_; }
  /// The last tick decided to hold because nothing could run.
  bool stalled() const { return stalled_; }
  const std::vector<ControllerChain>& library() const { return library_; }
  const Controller* active_controller() const;

 private:
  bool sweep(const KinematicState& state);
  int downstream_immediate(const ControllerChain& chain, const KinematicState& state) const;
  void enter(int chain, int index, const KinematicState& state);
  bool moved_since_check(const KinematicState& state) const;
  void mark_checked(const KinematicState& state);
  Action control(const KinematicState& state);
  Action tick_fc3(const KinematicState& state);
  Action tick_rgds(const KinematicState& state);
  Action tick_linear(const KinematicState& state);
  bool goal_reached(const KinematicState& state);

  const Scene* scene_;
  std::vector<ControllerChain> library_;
  std::vector<ConstraintSpec> goal_;
  System system_;
  ExecutorSettings settings_;

  Status status_ = Status::running;
  int chain_ = -1;
  int index_ = -1;
  bool feasible_ = false;
  int switches_ = 0;
  bool selected_once_ = false;
  int ticks_since_check_ = 0;
  std::vector<Eigen::Vector2d> checked_positions_;
  TransientTrackers trackers_;
  std::string last_event_;
  std::vector<std::string> entered_;
  std::optional<std::string> just_entered_;
  bool stalled_ = false;
};

struct TrialResult {
  std::string scenario;
  System system = System::fc3;
  std::string interference;
  int trial = 0;
  std::uint64_t seed = 0;
  Status outcome = Status::timeout;
  double sim_time = 0.0;
  long ticks = 0;
  int chain_switches = 0;
  std::vector<std::string> controllers_entered;
  std::vector<WorldEvent> events;
};

/// Seed of trial `k` for a base seed.
std::uint64_t trial_seed(std::uint64_t base, int trial);

/// Advances one tick: interference triggers, executor decision, world update.
/// Returns the executor's status after the tick.
Status advance(World& world, Executor& exec, PerturbationScript& script, const GraspTolerance& tol = {});

/// One run of a system on a scenario: world, executor and interference script.
class Episode {
 public:
  Episode(const Scenario& scenario, System system, const std::string& interference, std::uint64_t seed);

  /// One tick; a no-op once the run has ended.
  Status advance();
  /// Ticks until the run ends, skipping ahead over stalls that can no longer change.
  Status run_to_end();
  /// Running past the tick budget counts as a timeout.
  Status status() const;
  bool finished() const { return status() != Status::running; }
  long max_ticks() const { return max_ticks_; }

  const Scenario& scenario() const { return *scenario_; }
  const std::string& interference() const { return interference_; }
  std::uint64_t seed() const { return seed_; }
  World& world() { return world_; }
  const World& world() const { return world_; }
  Executor& executor() { return exec_; }
  const Executor& executor() const { return exec_; }
  PerturbationScript& script() { return script_; }

 private:
  const Scenario* scenario_;
  std::string interference_;
  std::uint64_t seed_;
  World world_;
  Executor exec_;
  PerturbationScript script_;
  long max_ticks_;
};

/// Runs one trial to success, infeasibility or timeout.
TrialResult run_trial(const Scenario& scenario, System system, const std::string& interference, int trial,
                      std::uint64_t base_seed);

}  // namespace fc3
