#pragma once

#include <atomic>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "fc3/executor.hpp"

namespace fc3 {

/// Server -> client state frame (single-line JSON).
std::string state_frame(const Episode& episode);
std::string error_frame(const std::string& message);

/// A parsed client message.
struct Command {
  enum class Kind { drag, pause, resume, reset, inject, select_system };
  Kind kind = Kind::pause;
  std::string object;  // drag
  double x = 0.0, y = 0.0;
  std::optional<double> theta;  // drag: absent keeps the current angle
  std::string scenario;         // reset: empty keeps the current scenario
  std::string interference;     // reset (empty keeps the current one), inject
  System system = System::fc3;  // select_system
};

/// Parses one client message; throws std::invalid_argument describing the problem.
Command parse_command(const std::string& message);

/// Live run driven by client commands.
///
/// Commands are queued from any thread and applied at tick boundaries by the
/// thread that calls step(). While paused only pause, resume, reset and
/// select_system are applied; drags and injections wait for the resume.
class Session {
 public:
  struct Options {
    std::uint64_t seed = 0;
    System system = System::fc3;
    std::string interference = "I0";
  };

  Session(Scenario scenario, Options options);

  /// Queues a client message. Returns an error frame for a malformed message.
  std::optional<std::string> submit(const std::string& message);
  /// A client connected or disconnected; disconnection pauses until the next connection.
  void set_connected(bool connected);

  /// Applies due commands, then advances up to `ticks` ticks unless paused or finished.
  /// Returns the number of ticks advanced.
  int step(int ticks);
  /// Paces step() against the wall clock, publishing frames, until `stop` is set.
  void run_realtime(const std::atomic<bool>& stop, double speed = 1.0);

  bool paused() const;
  bool connected() const { return connected_; }
  const Episode& episode() const { return *episode_; }
  std::uint64_t seed() const { return options_.seed; }

  /// Latest published frame (thread-safe).
  std::string latest_frame() const;
  /// Error frames produced while applying commands (thread-safe); clears them.
  std::vector<std::string> take_errors();

 private:
  void apply(const Command& c);
  void restart();
  void publish();
  const Scenario& scenario_named(const std::string& name);

  std::map<std::string, std::unique_ptr<Scenario>> scenarios_;
  const Scenario* scenario_;
  Options options_;
  std::unique_ptr<Episode> episode_;

  bool user_paused_ = false;
  std::atomic<bool> connected_{true};

  mutable std::mutex mutex_;
  std::deque<Command> queue_;
  std::vector<std::string> errors_;
  std::string frame_;
};

}  // namespace fc3
