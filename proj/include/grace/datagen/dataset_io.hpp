#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "grace/datagen/records.hpp"

namespace grace {

// One JSON object per line, fields in this fixed order:
// session_id, query_id, user_id, item_id, brand, shop, category, click, order,
// rank_pos (integer or null), teacher_score (shortest round-trip number or
// null), source ("displayed" | "undisplayed" |
// "random_negative").
std::string format_record(const ImpressionRecord& r);

// Throws DataError carrying `line` and naming the offending field.
ImpressionRecord parse_record(std::string_view text, std::size_t line);

void write_dataset(const Dataset& records, const std::filesystem::path& path);
Dataset read_dataset(const std::filesystem::path& path);

}  // namespace grace
