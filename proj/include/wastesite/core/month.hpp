#pragma once

#include <compare>
#include <cstdio>
#include <string>
#include <string_view>

#include "wastesite/core/error.hpp"

namespace wastesite {

/// Calendar month stored as a running index (year * 12 + month - 1).
class Month {
 public:
  constexpr Month() = default;
  constexpr Month(int year, int month) : index_(year * 12 + (month - 1)) {}

  static constexpr Month from_index(int index) {
    Month m;
    m.index_ = index;
    return m;
  }

  /// Parses "YYYY-MM".
  static Month parse(std::string_view text) {
    int y = 0;
    int m = 0;
    if (text.size() != 7 || text[4] != '-' ||
        std::sscanf(std::string(text).c_str(), "%4d-%2d", &y, &m) != 2 || m < 1 || m > 12) {
      throw FormatError("bad month '" + std::string(text) + "', expected YYYY-MM");
    }
    return Month(y, m);
  }

  constexpr int index() const noexcept { return index_; }
  constexpr int year() const noexcept { return index_ / 12; }
  constexpr int month() const noexcept { return index_ % 12 + 1; }

  std::string str() const {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02d", year(), month());
    return buf;
  }

  constexpr Month operator+(int months) const noexcept { return from_index(index_ + months); }
  constexpr Month operator-(int months) const noexcept { return from_index(index_ - months); }
  constexpr int operator-(Month other) const noexcept { return index_ - other.index_; }

  constexpr auto operator<=>(const Month&) const = default;

 private:
  int index_ = 0;
};

}  // namespace wastesite
