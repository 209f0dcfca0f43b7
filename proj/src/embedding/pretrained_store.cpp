#include "grace/embedding/pretrained_store.hpp"

#include <charconv>
#include <cfloat>
#include <cmath>
#include <fstream>
#include <string>
#include <string_view>

#include "grace/error.hpp"

namespace grace {

void PretrainedStore::insert(std::uint64_t item_id, std::vector<double> v) {
  if (v.size() != dim_) {
    throw DataError("pretrained vector for item " + std::to_string(item_id) +
                    " has dim " + std::to_string(v.size()) + ", expected " +
                    std::to_string(dim_));
  }
  double s = 0.0;
  for (double x : v) s += x * x;
  const double n = std::sqrt(s);
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw DataError("pretrained vector for item " + std::to_string(item_id) +
                    " cannot be normalized");
  }
  // Already-unit vectors are kept bit-for-bit so save/load round-trips.
  if (std::abs(n - 1.0) > 4 * DBL_EPSILON) {
    for (double& x : v) x /= n;
  }
  vectors_[item_id] = std::move(v);
}

std::optional<std::span<const double>> PretrainedStore::lookup(
    std::uint64_t item_id) const {
  const auto it = vectors_.find(item_id);
  if (it == vectors_.end()) return std::nullopt;
  return std::span<const double>(it->second);
}

void PretrainedStore::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  char buf[64];
  for (const auto& [id, v] : vectors_) {
    out << id;
    for (double x : v) {
      const auto res = std::to_chars(buf, buf + sizeof(buf), x);
      out << '\t' << std::string_view(buf, res.ptr);
    }
    out << '\n';
  }
  if (!out) throw DataError("failed writing " + path.string());
}

PretrainedStore PretrainedStore::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open pretrained fixture " + path.string());
  PretrainedStore store;
  bool first = true;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string_view> fields;
    std::string_view rest(line);
    while (true) {
      const auto tab = rest.find('\t');
      fields.push_back(rest.substr(0, tab));
      if (tab == std::string_view::npos) break;
      rest.remove_prefix(tab + 1);
    }
    if (fields.size() < 2) throw DataError("expected item_id and a vector", line_no);

    std::uint64_t id = 0;
    auto r = std::from_chars(fields[0].data(), fields[0].data() + fields[0].size(), id);
    if (r.ec != std::errc() || r.ptr != fields[0].data() + fields[0].size()) {
      throw DataError("bad item_id '" + std::string(fields[0]) + "'", line_no);
    }
    std::vector<double> v;
    v.reserve(fields.size() - 1);
    for (std::size_t i = 1; i < fields.size(); ++i) {
      double x = 0.0;
      const auto& f = fields[i];
      r = std::from_chars(f.data(), f.data() + f.size(), x);
      if (r.ec != std::errc() || r.ptr != f.data() + f.size()) {
        throw DataError("bad float '" + std::string(f) + "'", line_no);
      }
      v.push_back(x);
    }
    if (first) {
      store.dim_ = v.size();
      first = false;
    }
    if (store.contains(id)) {
      throw DataError("duplicate item_id " + std::to_string(id), line_no);
    }
    try {
      store.insert(id, std::move(v));
    } catch (const DataError& e) {
      throw DataError(e.what(), line_no);
    }
  }
  return store;
}

}  // namespace grace
