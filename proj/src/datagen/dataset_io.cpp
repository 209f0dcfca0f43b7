#include "grace/datagen/dataset_io.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "grace/error.hpp"

namespace grace {

std::string_view source_name(Source s) {
  switch (s) {
    case Source::kDisplayed: return "displayed";
    case Source::kUndisplayed: return "undisplayed";
    case Source::kRandomNegative: return "random_negative";
  }
  return "?";
}

std::optional<Source> parse_source(std::string_view s) {
  if (s == "displayed") return Source::kDisplayed;
  if (s == "undisplayed") return Source::kUndisplayed;
  if (s == "random_negative") return Source::kRandomNegative;
  return std::nullopt;
}

namespace {

constexpr std::array<std::string_view, 12> kFields = {
    "session_id", "query_id", "user_id",  "item_id",       "brand",  "shop",
    "category",   "click",    "order",    "rank_pos", "teacher_score", "source"};

}  // namespace

std::string format_record(const ImpressionRecord& r) {
  std::string s;
  s.reserve(200);
  auto field = [&](std::string_view name, auto value) {
    s += s.empty() ? "{\"" : ",\"";
    s += name;
    s += "\":";
    s += std::to_string(value);
  };
  field("session_id", r.session_id);
  field("query_id", r.query_id);
  field("user_id", r.user_id);
  field("item_id", r.item_id);
  field("brand", r.brand);
  field("shop", r.shop);
  field("category", r.category);
  field("click", r.click);
  field("order", r.order);
  if (r.rank_pos) {
    field("rank_pos", *r.rank_pos);
  } else {
    s += ",\"rank_pos\":null";
  }
  if (r.teacher_score) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, *r.teacher_score);
    s += ",\"teacher_score\":";
    s.append(buf, res.ptr);
  } else {
    s += ",\"teacher_score\":null";
  }
  s += ",\"source\":\"";
  s += source_name(r.source);
  s += "\"}";
  return s;
}

ImpressionRecord parse_record(std::string_view text, std::size_t line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(std::string("malformed JSON: ") + e.what(), line);
  }
  if (!j.is_object()) throw DataError("record is not a JSON object", line);
  for (const auto& [key, _] : j.items()) {
    if (std::find(kFields.begin(), kFields.end(), key) == kFields.end()) {
      throw DataError("unknown field '" + key + "'", line);
    }
  }
  auto get = [&](std::string_view name) -> const nlohmann::json& {
    const auto it = j.find(name);
    if (it == j.end()) throw DataError("missing field '" + std::string(name) + "'", line);
    return *it;
  };
  auto uint_field = [&](std::string_view name, std::uint64_t max) {
    const auto& v = get(name);
    if (!v.is_number_unsigned() || v.get<std::uint64_t>() > max) {
      throw DataError("field '" + std::string(name) + "' must be an unsigned integer", line);
    }
    return v.get<std::uint64_t>();
  };
  auto flag_field = [&](std::string_view name) {
    const auto v = uint_field(name, 1);
    return static_cast<int>(v);
  };

  ImpressionRecord r;
  r.session_id = uint_field("session_id", UINT64_MAX);
  r.query_id = static_cast<std::uint32_t>(uint_field("query_id", UINT32_MAX));
  r.user_id = static_cast<std::uint32_t>(uint_field("user_id", UINT32_MAX));
  r.item_id = uint_field("item_id", UINT64_MAX);
  r.brand = static_cast<std::uint32_t>(uint_field("brand", UINT32_MAX));
  r.shop = static_cast<std::uint32_t>(uint_field("shop", UINT32_MAX));
  r.category = static_cast<std::uint32_t>(uint_field("category", UINT32_MAX));
  r.click = flag_field("click");
  r.order = flag_field("order");
  const auto& pos = get("rank_pos");
  if (!pos.is_null()) {
    if (!pos.is_number_unsigned() || pos.get<std::uint64_t>() < 1 ||
        pos.get<std::uint64_t>() > INT32_MAX) {
      throw DataError("field 'rank_pos' must be a positive integer or null", line);
    }
    r.rank_pos = static_cast<int>(pos.get<std::uint64_t>());
  }
  const auto& score = get("teacher_score");
  if (!score.is_null()) {
    if (!score.is_number() || !std::isfinite(score.get<double>())) {
      throw DataError("field 'teacher_score' must be a finite number or null", line);
    }
    r.teacher_score = score.get<double>();
  }
  const auto& src = get("source");
  const auto parsed = src.is_string() ? parse_source(src.get<std::string>()) : std::nullopt;
  if (!parsed) throw DataError("field 'source' has an unknown value", line);
  r.source = *parsed;

  if (r.order == 1 && r.click == 0) throw DataError("field 'order' is 1 but click is 0", line);
  if (r.rank_pos.has_value() == (r.source == Source::kRandomNegative)) {
    throw DataError("field 'rank_pos' must be null exactly for random negatives", line);
  }
  if (r.teacher_score.has_value() != r.rank_pos.has_value()) {
    throw DataError("field 'teacher_score' must be null exactly when rank_pos is", line);
  }
  if (r.click == 1 && r.source != Source::kDisplayed) {
    throw DataError("field 'click' is 1 on a record that was not displayed", line);
  }
  return r;
}

void write_dataset(const Dataset& records, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  std::string buf;
  buf.reserve(1 << 20);
  for (const auto& r : records) {
    buf += format_record(r);
    buf += '\n';
    if (buf.size() > (1 << 20) - 512) {
      out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
      buf.clear();
    }
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw DataError("failed writing " + path.string());
}

Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open dataset " + path.string());
  Dataset records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    records.push_back(parse_record(line, line_no));
  }
  return records;
}

}  // namespace grace
