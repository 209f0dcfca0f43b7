#pragma once

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "grace/embedding/embedding_bank.hpp"

namespace grace {

enum class Source {
  kDisplayed,       // ranked and shown; carries observed feedback
  kUndisplayed,     // ranked by the teacher but below the display cut
  kRandomNegative,  // sampled from outside the candidate set, never ranked
};

std::string_view source_name(Source s);
std::optional<Source> parse_source(std::string_view s);

struct ImpressionRecord {
  std::uint64_t session_id = 0;
  std::uint32_t query_id = 0;
  std::uint32_t user_id = 0;
  std::uint64_t item_id = 0;
  std::uint32_t brand = 0;
  std::uint32_t shop = 0;
  std::uint32_t category = 0;
  int click = 0;
  int order = 0;
  std::optional<int> rank_pos;
  std::optional<double> teacher_score;  // noisy score behind rank_pos; present iff rank_pos is
  Source source = Source::kDisplayed;

  ItemFeatures features() const { return {item_id, brand, shop, category}; }
  bool has_feedback() const { return source != Source::kUndisplayed; }

  bool operator==(const ImpressionRecord&) const = default;
};

using Dataset = std::vector<ImpressionRecord>;

}  // namespace grace
