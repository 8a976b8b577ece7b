// Copyright Contributors to the lensfield project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <iostream>
#include <mutex>
#include <string>
#include <utility>

namespace lensfield {

using LogSink = std::function<void(const std::string &)>;

namespace detail {
inline std::mutex &log_mutex() {
    static std::mutex m;
    return m;
}
inline LogSink &warning_sink() {
    static LogSink sink = [](const std::string &msg) { std::cerr << "warning: " << msg << "\n"; };
    return sink;
}
} // namespace detail

/// Replaces the warning sink and returns the previous one.
inline LogSink set_warning_sink(LogSink sink) {
    std::lock_guard<std::mutex> lock(detail::log_mutex());
    return std::exchange(detail::warning_sink(), std::move(sink));
}

inline void log_warning(const std::string &msg) {
    std::lock_guard<std::mutex> lock(detail::log_mutex());
    if (detail::warning_sink())
        detail::warning_sink()(msg);
}

} // namespace lensfield
