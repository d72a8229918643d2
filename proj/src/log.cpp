#include "scgan/log.hpp"

#include <iostream>
#include <mutex>

#include "scgan/common.hpp"

namespace scgan {

std::string Dims::str() const {
  return std::to_string(x) + "x" + std::to_string(y) + "x" + std::to_string(z);
}

namespace log {
namespace {

std::mutex& sink_mutex() {
  static std::mutex m;
  return m;
}

Sink& current_sink() {
  static Sink sink = [](Level level, const std::string& message) {
    switch (level) {
      case Level::debug:
        break;
      case Level::info:
        std::cout << message << '\n';
        break;
      case Level::warning:
        std::cerr << "warning: " << message << '\n';
        break;
      case Level::error:
        std::cerr << "error: " << message << '\n';
        break;
    }
  };
  return sink;
}

}  // namespace

Sink set_sink(Sink sink) {
  std::lock_guard lock(sink_mutex());
  Sink previous = std::move(current_sink());
  current_sink() = std::move(sink);
  return previous;
}

void write(Level level, const std::string& message) {
  Sink sink;
  {
    std::lock_guard lock(sink_mutex());
    sink = current_sink();
  }
  if (sink) sink(level, message);
}

WarningCapture::WarningCapture() {
  previous_ = set_sink([this](Level level, const std::string& message) {
    if (level == Level::warning) {
      ++count_;
      last_ = message;
    }
  });
}

WarningCapture::~WarningCapture() { set_sink(std::move(previous_)); }

}  // namespace log
}  // namespace scgan
