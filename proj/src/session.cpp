#include "fc3/session.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <json.hpp>
#include <set>
#include <stdexcept>
#include <thread>

namespace fc3 {

namespace {

using nlohmann::json;

std::string num(double v) {
  if (std::abs(v) < 5e-7) v = 0.0;  // avoids "-0.000000"
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string str(const std::string& s) { return json(s).dump(); }

std::string shape_json(const Shape& s) {
  switch (s.kind) {
    case Shape::Kind::none:
      return "null";
    case Shape::Kind::disk:
      return "{\"kind\":\"disk\",\"radius\":" + num(s.a) + "}";
    case Shape::Kind::box:
      return "{\"kind\":\"box\",\"width\":" + num(s.a) + ",\"height\":" + num(s.b) + "}";
    case Shape::Kind::hook:
      return "{\"kind\":\"hook\",\"long\":" + num(s.a) + ",\"short\":" + num(s.b) + "}";
  }
  return "null";
}

const json& field(const json& msg, const char* key, json::value_t type, const char* type_name) {
  const auto it = msg.find(key);
  if (it == msg.end()) throw std::invalid_argument(std::string("missing field '") + key + "'");
  const bool ok = type == json::value_t::number_float ? it->is_number() : it->type() == type;
  if (!ok) throw std::invalid_argument(std::string("field '") + key + "' must be " + type_name);
  return *it;
}

double number_field(const json& msg, const char* key) {
  const double v = field(msg, key, json::value_t::number_float, "a number").get<double>();
  if (!std::isfinite(v)) throw std::invalid_argument(std::string("field '") + key + "' must be finite");
  return v;
}

std::string string_field(const json& msg, const char* key) {
  return field(msg, key, json::value_t::string, "a string").get<std::string>();
}

void only_keys(const json& msg, std::set<std::string> allowed) {
  allowed.insert("type");
  for (const auto& [key, value] : msg.items())
    if (!allowed.contains(key)) throw std::invalid_argument("unexpected field '" + key + "'");
}

}  // namespace

std::string state_frame(const Episode& episode) {
  const World& w = episode.world();
  const Scene& scene = w.scene();
  const auto& st = w.state();
  const auto poses = forward_kinematics(scene, st.config, st.attachments);
  const Executor& x = episode.executor();

  std::string out = "{\"type\":\"state\",\"t\":" + num(w.time()) + ",\"frames\":[";
  for (int f = 0; f < scene.frame_count(); ++f) {
    const auto& p = poses[static_cast<std::size_t>(f)];
    if (f) out += ',';
    out += "{\"name\":" + str(scene.frame(f).name) + ",\"x\":" + num(p.x()) + ",\"y\":" + num(p.y()) +
           ",\"theta\":" + num(p.theta) + ",\"shape\":" + shape_json(scene.frame(f).shape) + "}";
  }
  out += "],\"attachments\":[";
  for (std::size_t i = 0; i < st.attachments.size(); ++i) {
    if (i) out += ',';
    out += "{\"holder\":" + str(scene.frame(st.attachments[i].holder).name) +
           ",\"object\":" + str(scene.frame(st.attachments[i].object).name) + "}";
  }
  out += "],\"active_chain\":" + std::to_string(x.active_chain()) +
         ",\"active_index\":" + std::to_string(x.active_index()) +
         ",\"chain_feasible\":" + (x.chain_feasible() ? "true" : "false") + ",\"status\":" +
         str(to_string(episode.status())) + ",\"last_event\":" + str(x.last_event()) + "}";
  return out;
}

std::string error_frame(const std::string& message) {
  return "{\"type\":\"error\",\"message\":" + str(message) + "}";
}

Command parse_command(const std::string& message) {
  json msg;
  try {
    msg = json::parse(message);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("malformed JSON: ") + e.what());
  }
  if (!msg.is_object()) throw std::invalid_argument("message must be an object");
  const std::string type = string_field(msg, "type");
  Command c;
  if (type == "drag") {
    only_keys(msg, {"object", "x", "y", "theta"});
    c.kind = Command::Kind::drag;
    c.object = string_field(msg, "object");
    c.x = number_field(msg, "x");
    c.y = number_field(msg, "y");
    if (msg.contains("theta")) c.theta = number_field(msg, "theta");
  } else if (type == "pause" || type == "resume") {
    only_keys(msg, {});
    c.kind = type == "pause" ? Command::Kind::pause : Command::Kind::resume;
  } else if (type == "reset") {
    only_keys(msg, {"scenario", "interference"});
    c.kind = Command::Kind::reset;
    if (msg.contains("scenario")) c.scenario = string_field(msg, "scenario");
    if (msg.contains("interference")) c.interference = string_field(msg, "interference");
  } else if (type == "inject") {
    only_keys(msg, {"interference"});
    c.kind = Command::Kind::inject;
    c.interference = string_field(msg, "interference");
  } else if (type == "select_system") {
    only_keys(msg, {"system"});
    c.kind = Command::Kind::select_system;
    c.system = parse_system(string_field(msg, "system"));
  } else {
    throw std::invalid_argument("unknown message type '" + type + "'");
  }
  return c;
}

Session::Session(Scenario scenario, Options options) : options_(std::move(options)) {
  auto owned = std::make_unique<Scenario>(std::move(scenario));
  scenario_ = owned.get();
  scenarios_.emplace(owned->spec.name, std::move(owned));
  scenario_->interference(options_.interference);  // throws on an unknown id
  restart();
}

void Session::restart() {
  episode_ = std::make_unique<Episode>(*scenario_, options_.system, options_.interference, trial_seed(options_.seed, 0));
  publish();
}

std::optional<std::string> Session::submit(const std::string& message) {
  try {
    Command c = parse_command(message);
    std::lock_guard lock(mutex_);
    queue_.push_back(std::move(c));
    return std::nullopt;
  } catch (const std::invalid_argument& e) {
    return error_frame(e.what());
  }
}

void Session::set_connected(bool connected) { connected_ = connected; }

bool Session::paused() const { return user_paused_ || !connected_; }

const Scenario& Session::scenario_named(const std::string& name) {
  if (const auto it = scenarios_.find(name); it != scenarios_.end()) return *it->second;
  if (name.find('/') != std::string::npos || !std::filesystem::exists(bundled_scenario_path(name)))
    throw std::invalid_argument("unknown scenario '" + name + "'");
  auto loaded = std::make_unique<Scenario>(build_scenario(name));
  const Scenario& ref = *loaded;
  scenarios_.emplace(name, std::move(loaded));
  return ref;
}

void Session::apply(const Command& c) {
  World& w = episode_->world();
  switch (c.kind) {
    case Command::Kind::pause:
      user_paused_ = true;
      break;
    case Command::Kind::resume:
      user_paused_ = false;
      break;
    case Command::Kind::drag: {
      const Scene& scene = w.scene();
      if (!scene.has_frame(c.object)) throw std::invalid_argument("unknown object '" + c.object + "'");
      const int f = scene.frame_index(c.object);
      const auto& objects = scene.object_frames();
      if (std::find(objects.begin(), objects.end(), f) == objects.end())
        throw std::invalid_argument("'" + c.object + "' is not a movable object");
      double theta = 0.0;
      if (c.theta) {
        theta = *c.theta;
      } else {
        theta = forward_kinematics(scene, w.state().config, w.state().attachments)[static_cast<std::size_t>(f)].theta;
      }
      w.place(c.object, Pose2d(c.x, c.y, theta));
      break;
    }
    case Command::Kind::inject: {
      const InterferenceSpec* spec = nullptr;
      try {
        spec = &scenario_->interference(c.interference);
      } catch (const ScenarioError&) {
        throw std::invalid_argument("unknown interference '" + c.interference + "'");
      }
      for (const auto& e : spec->initial) w.apply(e);
      for (const auto& ev : spec->events)
        for (const auto& e : ev.effects) w.apply(e);
      w.note("inject", c.interference);
      break;
    }
    case Command::Kind::reset: {
      const Scenario& next = c.scenario.empty() ? *scenario_ : scenario_named(c.scenario);
      std::string interference = c.interference;
      if (interference.empty()) {
        const auto ids = next.interference_ids();
        interference = std::find(ids.begin(), ids.end(), options_.interference) != ids.end() ? options_.interference
                                                                                              : "I0";
      }
      try {
        next.interference(interference);
      } catch (const ScenarioError&) {
        throw std::invalid_argument("unknown interference '" + interference + "'");
      }
      scenario_ = &next;
      options_.interference = interference;
      restart();
      break;
    }
    case Command::Kind::select_system:
      options_.system = c.system;
      restart();
      break;
  }
}

int Session::step(int ticks) {
  std::deque<Command> pending;
  {
    std::lock_guard lock(mutex_);
    pending.swap(queue_);
  }
  std::deque<Command> deferred;  // drags and injections wait while paused
  for (auto& c : pending) {
    const bool waits = c.kind == Command::Kind::drag || c.kind == Command::Kind::inject;
    if (waits && paused()) {
      deferred.push_back(std::move(c));
      continue;
    }
    const bool restarts = c.kind == Command::Kind::reset || c.kind == Command::Kind::select_system;
    try {
      apply(c);
      if (restarts) deferred.clear();
    } catch (const std::exception& e) {
      std::lock_guard lock(mutex_);
      errors_.push_back(error_frame(e.what()));
    }
    if (!paused()) {
      for (const auto& d : deferred) {
        try {
          apply(d);
        } catch (const std::exception& e) {
          std::lock_guard lock(mutex_);
          errors_.push_back(error_frame(e.what()));
        }
      }
      deferred.clear();
    }
  }
  if (!deferred.empty()) {
    std::lock_guard lock(mutex_);
    queue_.insert(queue_.begin(), deferred.begin(), deferred.end());
  }

  int advanced = 0;
  while (advanced < ticks && !paused() && !episode_->finished()) {
    episode_->advance();
    ++advanced;
  }
  publish();
  return advanced;
}

void Session::run_realtime(const std::atomic<bool>& stop, double speed) {
  using clock = std::chrono::steady_clock;
  const double tau = scenario_->spec.params.tau;
  constexpr int max_catch_up = 25;  // ticks per iteration; a slow solve drops the backlog
  auto last = clock::now();
  double owed = 0.0;
  while (!stop) {
    const auto now = clock::now();
    const double dt = std::chrono::duration<double>(now - last).count();
    last = now;
    const bool idle = paused() || episode_->finished();
    owed = idle ? 0.0 : owed + dt * speed / episode_->world().tau();
    int due = static_cast<int>(owed);
    if (due > max_catch_up) {
      due = max_catch_up;
      owed = due;
    }
    owed -= step(due);
    if (owed < 0.0) owed = 0.0;
    std::this_thread::sleep_for(std::chrono::duration<double>(std::min(tau / speed, 1.0 / 60.0)));
  }
}

void Session::publish() {
  std::string f = state_frame(*episode_);
  std::lock_guard lock(mutex_);
  frame_ = std::move(f);
}

std::string Session::latest_frame() const {
  std::lock_guard lock(mutex_);
  return frame_;
}

std::vector<std::string> Session::take_errors() {
  std::lock_guard lock(mutex_);
  return std::exchange(errors_, {});
}

}  // namespace fc3
