#include "mbconn/planner.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <stdexcept>
#include <tuple>

namespace mbconn {

namespace {

struct Item {
  const FieldSpec* field;
  std::size_t begin;
  std::size_t end;
};

// Minimum-span partition of offset-sorted items into contiguous groups.
// A group [j, i) is valid while every member's gap to the furthest end seen
// so far is within the threshold and the group span is within the limit;
// both conditions only get worse as i grows, so each j scans a prefix.
// A group may only start where no earlier item reaches past it, which keeps
// spans disjoint when fields overlap.
std::vector<std::pair<std::size_t, std::size_t>> partition(
    const std::vector<Item>& items, std::size_t gap_threshold,
    std::size_t limit) {
  const std::size_t n = items.size();
  constexpr auto kInf = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> best(n + 1, kInf);
  std::vector<std::size_t> parent(n + 1, 0);
  best[0] = 0;
  std::vector<std::size_t> reach(n + 1, 0);
  for (std::size_t k = 0; k < n; ++k) reach[k + 1] = std::max(reach[k], items[k].end);

  for (std::size_t j = 0; j < n; ++j) {
    if (best[j] == kInf || reach[j] > items[j].begin) continue;
    std::size_t max_end = items[j].end;
    for (std::size_t i = j + 1; i <= n; ++i) {
      if (i > j + 1) {
        const auto& it = items[i - 1];
        if (it.begin > max_end && it.begin - max_end > gap_threshold) break;
        max_end = std::max(max_end, it.end);
      }
      if (max_end - items[j].begin > limit) break;
      if (best[j] + 1 < best[i]) {
        best[i] = best[j] + 1;
        parent[i] = j;
      }
    }
  }
  if (n > 0 && best[n] == kInf) {
    throw std::invalid_argument("fields cannot be split into spans within the read limit");
  }

  std::vector<std::pair<std::size_t, std::size_t>> groups;
  for (std::size_t i = n; i > 0; i = parent[i]) groups.emplace_back(parent[i], i);
  std::reverse(groups.begin(), groups.end());
  return groups;
}

}  // namespace

BatchPlan build_plan(const ConnectorModel& model, std::size_t gap_threshold) {
  BatchPlan plan;
  plan.gap_threshold = gap_threshold;

  for (auto space : kAllSpaces) {
    std::vector<Item> items;
    for (const auto& f : model.fields) {
      if (f.space != space) continue;
      const auto span = span_of(f);
      if (span == 0 || f.offset + span > kAddressSpaceSize) {
        throw std::invalid_argument("field '" + f.name + "' exceeds the address space");
      }
      items.push_back(Item{&f, f.offset, f.offset + span});
    }
    std::sort(items.begin(), items.end(), [](const Item& a, const Item& b) {
      return std::tie(a.begin, a.end, a.field->name) <
             std::tie(b.begin, b.end, b.field->name);
    });

    for (auto [j, i] : partition(items, gap_threshold, max_read_quantity(space))) {
      ReadSpan span;
      span.space = space;
      span.start = static_cast<std::uint16_t>(items[j].begin);
      std::size_t end = items[j].end;
      for (std::size_t k = j; k < i; ++k) {
        const auto& f = *items[k].field;
        end = std::max(end, items[k].end);
        span.fields.push_back(
            CoveredField{f.name, items[k].begin - span.start, f.type, model.order_of(f)});
      }
      span.count = static_cast<std::uint16_t>(end - span.start);
      plan.spans.push_back(std::move(span));
    }
  }
  return plan;
}

std::vector<std::string> check_plan(const ConnectorModel& model,
                                    const BatchPlan& plan) {
  std::vector<std::string> problems;
  std::map<std::string, int> seen;

  const ReadSpan* prev = nullptr;
  for (const auto& span : plan.spans) {
    const std::string where = std::string(to_string(span.space)) + "@" +
                              std::to_string(span.start) + "+" +
                              std::to_string(span.count);
    if (span.count < 1 || span.count > max_read_quantity(span.space)) {
      problems.push_back(where + ": count outside read limit");
    }
    if (span.start + std::size_t{span.count} > kAddressSpaceSize) {
      problems.push_back(where + ": exceeds address space");
    }
    if (prev) {
      if (static_cast<int>(span.space) < static_cast<int>(prev->space)) {
        problems.push_back(where + ": spaces out of order");
      } else if (span.space == prev->space &&
                 span.start < prev->start + std::size_t{prev->count}) {
        problems.push_back(where + ": overlaps or precedes previous span");
      }
    }
    prev = &span;

    for (const auto& c : span.fields) {
      ++seen[c.name];
      const auto* f = model.find(c.name);
      if (!f) {
        problems.push_back(where + ": unknown field '" + c.name + "'");
        continue;
      }
      if (f->space != span.space || f->offset != span.start + c.at) {
        problems.push_back(where + ": field '" + c.name + "' misplaced");
      }
      if (c.at + span_of(*f) > span.count) {
        problems.push_back(where + ": field '" + c.name + "' not inside span");
      }
      if (c.type != f->type || c.order != model.order_of(*f)) {
        problems.push_back(where + ": decode entry for '" + c.name +
                           "' disagrees with model");
      }
    }
  }
  for (const auto& f : model.fields) {
    const auto n = seen[f.name];
    if (n != 1) {
      problems.push_back("field '" + f.name + "' covered " + std::to_string(n) +
                         " times");
    }
  }
  return problems;
}

}  // namespace mbconn
