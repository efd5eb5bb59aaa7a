#pragma once

#include <atomic>
#include <functional>

#include "fc3/session.hpp"

namespace fc3 {

struct ServeOptions {
  unsigned short port = 8080;  // 0 picks a free port
  double frame_rate = 30.0;
  double speed = 1.0;  // sim seconds per wall second
  std::function<void(unsigned short)> on_listening;
};

/// Serves one live session over a websocket until `stop` is set. One client at a
/// time; further clients receive an error frame and are closed. The session is
/// paused while no client is connected. Throws std::runtime_error when the port
/// cannot be bound.
void serve(Session& session, const ServeOptions& options, const std::atomic<bool>& stop);

}  // namespace fc3
