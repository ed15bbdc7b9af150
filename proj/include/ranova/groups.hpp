#pragma once

#include <algorithm>
#include <compare>
#include <cstddef>
#include <sstream>
#include <string>
#include <vector>

#include "ranova/errors.hpp"

namespace ranova {

// A nonempty set of input coordinates, 1-based and stored sorted. Groups
// index the ANOVA components: {1}, {2}, {1,3}, ...
class GroupIndex {
 public:
  GroupIndex() = default;

  explicit GroupIndex(std::vector<int> members) : members_(std::move(members)) {
    if (members_.empty()) throw argument_error("group: empty coordinate set");
    std::sort(members_.begin(), members_.end());
    for (std::size_t i = 0; i < members_.size(); ++i) {
      if (members_[i] < 1) throw argument_error("group: coordinates are 1-based");
      if (i > 0 && members_[i] == members_[i - 1])
        throw argument_error("group: duplicate coordinate " + std::to_string(members_[i]));
    }
  }

  // Parses the pipe-joined form, e.g. "2" or "1|3".
  static GroupIndex parse(const std::string& text) {
    std::vector<int> members;
    std::istringstream in(text);
    std::string field;
    while (std::getline(in, field, '|')) {
      try {
        std::size_t used = 0;
        int a = std::stoi(field, &used);
        if (used != field.size()) throw std::invalid_argument(field);
        members.push_back(a);
      } catch (const std::exception&) {
        throw parse_error("group: bad coordinate '" + field + "' in '" + text + "'");
      }
    }
    if (members.empty()) throw parse_error("group: empty label '" + text + "'");
    return GroupIndex(std::move(members));
  }

  const std::vector<int>& members() const noexcept { return members_; }
  int order() const noexcept { return static_cast<int>(members_.size()); }
  int max_coordinate() const noexcept { return members_.empty() ? 0 : members_.back(); }

  bool contains(int a) const {
    return std::binary_search(members_.begin(), members_.end(), a);
  }

  std::string label() const {
    std::string out;
    for (std::size_t i = 0; i < members_.size(); ++i) {
      if (i) out += '|';
      out += std::to_string(members_[i]);
    }
    return out;
  }

  // Order by size first, then lexicographically; this is the canonical
  // enumeration and tie-breaking order everywhere.
  friend std::strong_ordering operator<=>(const GroupIndex& a, const GroupIndex& b) {
    if (auto c = a.members_.size() <=> b.members_.size(); c != 0) return c;
    return a.members_ <=> b.members_;
  }
  friend bool operator==(const GroupIndex& a, const GroupIndex& b) = default;

 private:
  std::vector<int> members_;
};

// All subsets of {1..d} of size 1..d_max in canonical order.
inline std::vector<GroupIndex> enumerate_groups(int d, int d_max) {
  if (d < 1) throw argument_error("enumerate_groups: d must be positive");
  if (d_max < 1 || d_max > d)
    throw argument_error("enumerate_groups: need 1 <= d_max <= d");
  std::vector<GroupIndex> out;
  for (int size = 1; size <= d_max; ++size) {
    std::vector<int> comb(static_cast<std::size_t>(size));
    for (int i = 0; i < size; ++i) comb[static_cast<std::size_t>(i)] = i + 1;
    while (true) {
      out.emplace_back(comb);
      int i = size - 1;
      while (i >= 0 && comb[static_cast<std::size_t>(i)] == d - (size - 1 - i)) --i;
      if (i < 0) break;
      ++comb[static_cast<std::size_t>(i)];
      for (int j = i + 1; j < size; ++j)
        comb[static_cast<std::size_t>(j)] = comb[static_cast<std::size_t>(j - 1)] + 1;
    }
  }
  return out;
}

}  // namespace ranova
