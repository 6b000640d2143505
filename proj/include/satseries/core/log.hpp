#pragma once

#include <initializer_list>
#include <string>
#include <string_view>
#include <utility>

namespace satseries::log {

enum class Level { Debug, Info, Warn, Error };
enum class Format { Text, Json };

void set_format(Format format);
void set_min_level(Level level);

using Field = std::pair<std::string_view, std::string>;

/// Writes one structured line to stderr. Text form: `LEVEL message k=v ...`;
/// JSON form: one object per line with `level`, `msg` and the fields.
void write(Level level, std::string_view message, std::initializer_list<Field> fields = {});

inline void debug(std::string_view m, std::initializer_list<Field> f = {}) { write(Level::Debug, m, f); }
inline void info(std::string_view m, std::initializer_list<Field> f = {}) { write(Level::Info, m, f); }
inline void warn(std::string_view m, std::initializer_list<Field> f = {}) { write(Level::Warn, m, f); }
inline void error(std::string_view m, std::initializer_list<Field> f = {}) { write(Level::Error, m, f); }

} // namespace satseries::log
