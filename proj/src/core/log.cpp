#include "tarstop/log.hpp"

#include <cstdio>
#include <mutex>

namespace tarstop {

namespace {

std::mutex sink_mutex;

WarningSink& sink() {
  static WarningSink s = [](std::string_view m) {
    std::fprintf(stderr, "tarstop: warning: %.*s\n", static_cast<int>(m.size()), m.data());
  };
  return s;
}

}  // namespace

void set_warning_sink(WarningSink s) {
  std::lock_guard lock(sink_mutex);
  sink() = std::move(s);
}

void log_warning(std::string_view message) {
  std::lock_guard lock(sink_mutex);
  if (sink()) sink()(message);
}

}  // namespace tarstop
