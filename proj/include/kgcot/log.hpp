#pragma once

#include <functional>
#include <string>

namespace kgcot::log {

// Warning sink, replaceable from tests. Default writes to stderr.
// Warnings never go to command output files so artifacts stay byte-stable.
void warn(const std::string& msg);
void set_warn_handler(std::function<void(const std::string&)> handler);
void reset_warn_handler();

}  // namespace kgcot::log
