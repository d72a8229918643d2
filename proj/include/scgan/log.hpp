#pragma once

#include <functional>
#include <string>

namespace scgan::log {

enum class Level { debug, info, warning, error };

using Sink = std::function<void(Level, const std::string&)>;

/// Replaces the process-wide sink and returns the previous one. The default
/// sink writes warnings and errors to stderr and info to stdout.
Sink set_sink(Sink sink);

void write(Level level, const std::string& message);

inline void info(const std::string& m) { write(Level::info, m); }
inline void warn(const std::string& m) { write(Level::warning, m); }
inline void error(const std::string& m) { write(Level::error, m); }

/// Captures warnings for the lifetime of the object (tests use this).
class WarningCapture {
 public:
  WarningCapture();
  ~WarningCapture();
  WarningCapture(const WarningCapture&) = delete;
  WarningCapture& operator=(const WarningCapture&) = delete;

  [[nodiscard]] int count() const { return count_; }
  [[nodiscard]] const std::string& last() const { return last_; }

 private:
  Sink previous_;
  int count_ = 0;
  std::string last_;
};

}  // namespace scgan::log
