#include "fc3/executor.hpp"

#include <cmath>

namespace fc3 {

const char* to_string(System s) {
  switch (s) {
    case System::fc3:
      return "fc3";
    case System::rgds:
      return "rgds";
    case System::linear:
      return "linear";
  }
  return "?";
}

const char* to_string(Status s) {
  switch (s) {
    case Status::running:
      return "running";
    case Status::success:
      return "success";
    case Status::infeasible:
      return "infeasible";
    case Status::timeout:
      return "timeout";
  }
  return "?";
}

System parse_system(const std::string& s) {
  if (s == "fc3") return System::fc3;
  if (s == "rgds") return System::rgds;
  if (s == "linear") return System::linear;
  throw std::invalid_argument("unknown system '" + s + "' (expected fc3, rgds or linear)");
}

ExecutorSettings executor_settings(const ScenarioParams& params) {
  ExecutorSettings s;
  s.sequence.control = control_settings(params);
  s.n_check = params.n_check;
  s.recheck_motion = params.recheck_motion;
  return s;
}

Executor::Executor(const Scene& scene, std::vector<ControllerChain> library, std::vector<ConstraintSpec> goal,
                   System system, ExecutorSettings settings)
    : scene_(&scene),
      library_(std::move(library)),
      goal_(std::move(goal)),
      system_(system),
      settings_(std::move(settings)) {}

void Executor::reset() {
  status_ = Status::running;
  chain_ = index_ = -1;
  feasible_ = false;
  switches_ = 0;
  selected_once_ = false;
  ticks_since_check_ = 0;
  trackers_.clear();
  last_event_.clear();
  entered_.clear();
  just_entered_.reset();
  stalled_ = false;
}

const Controller* Executor::active_controller() const {
  if (chain_ < 0 || index_ < 0) return nullptr;
  return &library_[static_cast<std::size_t>(chain_)].controllers[static_cast<std::size_t>(index_)];
}

int Executor::downstream_immediate(const ControllerChain& chain, const KinematicState& state) const {
  const double eps = settings_.sequence.control.eps_feas;
  for (int i = chain.size() - 1; i >= 0; --i)
    if (immediate_feasible(*scene_, chain.controllers[static_cast<std::size_t>(i)], state.config, state.attachments, eps)
            .holds)
      return i;
  return -1;
}

void Executor::enter(int chain, int index, const KinematicState& state) {
  chain_ = chain;
  index_ = index;
  const Controller& c = *active_controller();
  trackers_ = enter_controller(*scene_, c, state, settings_.sequence.control.tau);
  if (entered_.empty() || entered_.back() != c.name) entered_.push_back(c.name);
  just_entered_ = c.name;
  last_event_ = "enter " + c.name;
}

bool Executor::moved_since_check(const KinematicState& state) const {
  const auto& objects = scene_->object_frames();
  if (checked_positions_.size() != objects.size()) return true;
  for (std::size_t k = 0; k < objects.size(); ++k) {
    if (state.attachment_of(objects[k])) continue;
    const int off = scene_->dof_offset(objects[k]);
    const Eigen::Vector2d p(state.config(off), state.config(off + 1));
    if ((p - checked_positions_[k]).norm() > settings_.recheck_motion) return true;
  }
  return false;
}

void Executor::mark_checked(const KinematicState& state) {
  checked_positions_.clear();
  for (int f : scene_->object_frames()) {
    const int off = scene_->dof_offset(f);
    checked_positions_.emplace_back(state.config(off), state.config(off + 1));
  }
  ticks_since_check_ = 0;
}

bool Executor::sweep(const KinematicState& state) {
  for (std::size_t i = 0; i < library_.size(); ++i) {
    const auto& chain = library_[i];
    const int k = system_ == System::linear ? 0 : downstream_immediate(chain, state);
    if (k < 0) continue;
    if (!sequence_feasible(*scene_, chain, k, state, settings_.sequence).feasible) continue;
    const int chosen = static_cast<int>(i);
    if (chain_ >= 0 && chosen != chain_) {
      ++switches_;
      last_event_ = "switch to chain " + std::to_string(chosen);
    }
    feasible_ = true;
    mark_checked(state);
    if (chosen != chain_ || k != index_) enter(chosen, k, state);
    selected_once_ = true;
    return true;
  }
  feasible_ = false;
  status_ = Status::infeasible;
  last_event_ = "no feasible chain";
  return false;
}

Action Executor::control(const KinematicState& state) {
  const Controller& c = *active_controller();
  const auto& cs = settings_.sequence.control;
  if (c.signal.kind != Signal::Kind::none && final_feasible(*scene_, c, state.config, state.attachments, cs.eps_feas).holds)
    return {Action::Kind::fire, {}, &c};
  try {
    return {Action::Kind::step, fc3::step(*scene_, c, trackers_, state, cs), nullptr};
  } catch (const ControlError& e) {
    last_event_ = std::string("control error in ") + c.name + ": " + e.what();
    if (system_ == System::fc3)
      feasible_ = false;
    else
      stalled_ = true;
    return {};
  }
}

Action Executor::tick(const KinematicState& state) {
  just_entered_.reset();
  stalled_ = false;
  if (status_ != Status::running) return {};
  switch (system_) {
    case System::fc3:
      return tick_fc3(state);
    case System::rgds:
      return tick_rgds(state);
    case System::linear:
      return tick_linear(state);
  }
  return {};
}

bool Executor::goal_reached(const KinematicState& state) {
  if (!goal_satisfied(*scene_, goal_, state.config, state.attachments, settings_.sequence.control.eps_feas)) return false;
  status_ = Status::success;
  last_event_ = "goal reached";
  return true;
}

Action Executor::tick_fc3(const KinematicState& state) {
  if (goal_reached(state)) return {};
  if (chain_ < 0 || !feasible_) {
    if (!sweep(state)) return {};
  }
  int k = downstream_immediate(library_[static_cast<std::size_t>(chain_)], state);
  if (k < 0) {
    if (!sweep(state)) return {};
    k = index_;
  }
  if (k != index_) enter(chain_, k, state);
  ++ticks_since_check_;
  if (ticks_since_check_ >= settings_.n_check || moved_since_check(state)) {
    feasible_ = sequence_feasible(*scene_, library_[static_cast<std::size_t>(chain_)], index_, state, settings_.sequence)
                    .feasible;
    mark_checked(state);
    if (!feasible_) {
      last_event_ = "chain infeasible";
      if (!sweep(state)) return {};
    }
  }
  return control(state);
}

Action Executor::tick_rgds(const KinematicState& state) {
  if (goal_reached(state)) return {};
  if (!selected_once_ && !sweep(state)) return {};
  const int k = downstream_immediate(library_[static_cast<std::size_t>(chain_)], state);
  if (k < 0) {
    stalled_ = true;
    last_event_ = "no controller applicable";
    return {};
  }
  if (k != index_) enter(chain_, k, state);
  return control(state);
}

Action Executor::tick_linear(const KinematicState& state) {
  const double eps = settings_.sequence.control.eps_feas;
  if (goal_reached(state)) return {};
  if (!selected_once_ && !sweep(state)) return {};
  const auto& chain = library_[static_cast<std::size_t>(chain_)];
  if (index_ + 1 < chain.size() &&
      immediate_feasible(*scene_, chain.controllers[static_cast<std::size_t>(index_ + 1)], state.config,
                         state.attachments, eps)
          .holds)
    enter(chain_, index_ + 1, state);
  if (!immediate_feasible(*scene_, *active_controller(), state.config, state.attachments, eps).holds) {
    stalled_ = true;
    last_event_ = "waiting on " + active_controller()->name;
    return {};
  }
  return control(state);
}

void Executor::fire_failed(const KinematicState& state) {
  if (!active_controller()) return;
  const std::string name = active_controller()->name;
  enter(chain_, index_, state);
  last_event_ = "signal failed in " + name;
}

std::uint64_t trial_seed(std::uint64_t base, int trial) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(trial + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

Status advance(World& world, Executor& exec, PerturbationScript& script, const GraspTolerance& tol) {
  for (const auto& e : script.due(world.time())) world.apply(e);
  const Action a = exec.tick(world.state());
  if (exec.just_entered()) {
    script.entered(*exec.just_entered(), world.time());
    world.note("enter", *exec.just_entered());
  }
  if (exec.status() != Status::running) {
    world.note("status", to_string(exec.status()));
    return exec.status();
  }
  switch (a.kind) {
    case Action::Kind::fire: {
      const Controller& c = *a.fire;
      std::string object;
      if (c.signal.kind == Signal::Kind::grasp) {
        object = world.scene().frame(c.signal.object).name;
      } else if (const int held = world.state().held_by(c.signal.holder); held >= 0) {
        object = world.scene().frame(held).name;
      }
      for (const auto& e : script.on_signal(c.signal.kind, object)) world.apply(e);
      try {
        world.fire(c, tol);
      } catch (const KinematicsError& e) {
        world.note("fire_failed", c.name + ": " + e.what());
        exec.fire_failed(world.state());
      }
      world.hold();
      break;
    }
    case Action::Kind::step:
      world.step(a.reference);
      break;
    case Action::Kind::hold:
      world.hold();
      break;
  }
  return exec.status();
}

namespace {

Executor make_executor(const Scenario& scenario, const KinematicState& initial, System system) {
  const auto settings = executor_settings(scenario.spec.params);
  Library lib = build_library(scenario, initial, settings.sequence.control);
  return Executor(scenario.scene, std::move(lib.chains), scenario.goal, system, settings);
}

}  // namespace

Episode::Episode(const Scenario& scenario, System system, const std::string& interference, std::uint64_t seed)
    : scenario_(&scenario),
      interference_(interference),
      seed_(seed),
      world_(scenario.scene, scenario.initial_state(interference, seed), scenario.spec.params.tau,
             scenario.spec.params.velocity_limit),
      exec_(make_executor(scenario, world_.state(), system)),
      script_(scenario.interference(interference)),
      max_ticks_(std::lround(scenario.spec.params.timeout / scenario.spec.params.tau)) {}

Status Episode::status() const {
  if (exec_.status() == Status::running && world_.ticks() >= max_ticks_) return Status::timeout;
  return exec_.status();
}

Status Episode::advance() {
  if (finished()) return status();
  fc3::advance(world_, exec_, script_);
  return status();
}

Status Episode::run_to_end() {
  while (!finished()) {
    advance();
    // A stall with a motionless world and no pending trigger repeats until the timeout.
    if (exec_.stalled() && world_.state().velocity.isZero() && !script_.pending_timed()) world_.advance_to(max_ticks_);
  }
  return status();
}

TrialResult run_trial(const Scenario& scenario, System system, const std::string& interference, int trial,
                      std::uint64_t base_seed) {
  TrialResult r;
  r.scenario = scenario.spec.name;
  r.system = system;
  r.interference = interference;
  r.trial = trial;
  r.seed = trial_seed(base_seed, trial);

  Episode ep(scenario, system, interference, r.seed);
  r.outcome = ep.run_to_end();
  r.sim_time = ep.world().time();
  r.ticks = ep.world().ticks();
  r.chain_switches = ep.executor().switches();
  r.controllers_entered = ep.executor().entered();
  r.events = ep.world().log();
  return r;
}

}  // namespace fc3
