#include "kaqa/log.h"

#include <atomic>
#include <iostream>
#include <mutex>

namespace kaqa {
namespace {

std::atomic<bool> quiet{false};
std::mutex mu;

}  // namespace

void SetQuiet(bool q) { quiet = q; }

bool IsQuiet() { return quiet; }

void LogInfo(std::string_view message) {
  if (quiet) return;
  std::lock_guard<std::mutex> lock(mu);
  std::cerr << message << '\n';
}

void LogWarning(std::string_view message) {
  std::lock_guard<std::mutex> lock(mu);
  std::cerr << "warning: " << message << '\n';
}

}  // namespace kaqa
