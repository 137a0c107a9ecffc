#pragma once

#include <functional>
#include <string>
#include <string_view>

namespace tarstop {

using WarningSink = std::function<void(std::string_view)>;

/// Replaces the warning sink (default: stderr). Pass nullptr to silence.
void set_warning_sink(WarningSink sink);
void log_warning(std::string_view message);

}  // namespace tarstop
