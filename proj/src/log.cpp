#include "kgcot/log.hpp"

#include <iostream>
#include <mutex>

namespace kgcot::log {

namespace {
std::function<void(const std::string&)> g_handler;
std::mutex g_mutex;
}  // namespace

void warn(const std::string& msg) {
    std::lock_guard<std::mutex> lock(g_mutex);
    if (g_handler) {
        g_handler(msg);
    } else {
        std::cerr << "[warn] " << msg << "\n";
    }
}

void set_warn_handler(std::function<void(const std::string&)> handler) {
    std::lock_guard<std::mutex> lock(g_mutex);
    g_handler = std::move(handler);
}

void reset_warn_handler() {
    std::lock_guard<std::mutex> lock(g_mutex);
    g_handler = nullptr;
}

}  // namespace kgcot::log
