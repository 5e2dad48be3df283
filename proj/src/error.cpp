#include "cqr/error.hpp"

#include <cstdio>
#include <mutex>

namespace cqr {

namespace {

void stderr_sink(const char* message, void*) { std::fprintf(stderr, "warning: %s\n", message); }

std::mutex g_sink_mutex;
WarningSink g_sink = &stderr_sink;
void* g_sink_data = nullptr;

}  // namespace

const char* error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::config: return "config";
    case ErrorCode::schema: return "schema";
    case ErrorCode::parse: return "parse";
    case ErrorCode::empty_input: return "empty_input";
    case ErrorCode::io: return "io";
    case ErrorCode::singular_design: return "singular_design";
    case ErrorCode::solver: return "solver";
    case ErrorCode::numerical: return "numerical";
    case ErrorCode::unsupported: return "unsupported";
    case ErrorCode::unreliable: return "unreliable";
    case ErrorCode::precondition: return "precondition";
  }
  return "unknown";
}

void warn(const std::string& message) {
  std::lock_guard<std::mutex> lock(g_sink_mutex);
  if (g_sink) g_sink(message.c_str(), g_sink_data);
}

void set_warning_sink(WarningSink sink, void* user_data) {
  std::lock_guard<std::mutex> lock(g_sink_mutex);
  g_sink = sink;
  g_sink_data = user_data;
}

}  // namespace cqr
