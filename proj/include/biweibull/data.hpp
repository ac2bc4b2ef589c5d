#pragma once

// CSV ingestion and observation-category classification.
//
// Canonical schema (UTF-8, comma-separated, '.' decimal point, LF or CRLF):
//
//   id,wait_time,survival_time,transplant,dead
//
// wait_time is the time to the non-fatal event (days) and may be blank on
// rows with transplant=0, where it is ignored; survival_time is the time
// to death or censoring; the flags are 0/1.  Time unit is fixed as days.
//
// Classification follows the four observable categories; rows whose
// event time is exactly zero are dropped (sub-densities are singular at
// the origin) and itemized in the cleaning report.

#include <array>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "biweibull/likelihood.hpp"

namespace biweibull::data {

struct RawSubject {
  std::string id;
  std::optional<double> wait_time;  // days; empty only when transplant = 0
  double survival_time;             // days
  bool transplant;
  bool dead;
  std::size_t line;  // 1-based source line, kept for error messages
};

class parse_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline constexpr std::string_view kHeader = "id,wait_time,survival_time,transplant,dead";

[[noreturn]] inline void fail(std::size_t line, const char* field, const std::string& what) {
  std::ostringstream msg;
  msg << "line " << line << ", field " << field << ": " << what;
  throw parse_error(msg.str());
}

inline std::string_view strip_cr(std::string_view s) {
  if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
  return s;
}

inline double parse_nonneg(std::string_view s, std::size_t line, const char* field) {
  double v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    fail(line, field, "cannot parse '" + std::string(s) + "' as a number");
  }
  if (!(v >= 0.0) || !std::isfinite(v)) {
    fail(line, field, "must be finite and >= 0, got '" + std::string(s) + "'");
  }
  return v;
}

inline bool parse_flag(std::string_view s, std::size_t line, const char* field) {
  if (s == "0") return false;
  if (s == "1") return true;
  fail(line, field, "must be 0 or 1, got '" + std::string(s) + "'");
}

}  // namespace detail

inline std::vector<RawSubject> parse_csv(std::istream& in) {
  std::string raw;
  std::size_t line_no = 0;

  if (!std::getline(in, raw)) throw parse_error("no records: input is empty (missing header row)");
  ++line_no;
  std::string_view header = detail::strip_cr(raw);
  if (header.size() >= 3 && header.substr(0, 3) == "\xEF\xBB\xBF") header.remove_prefix(3);
  if (header != detail::kHeader) {
    throw parse_error("line 1: expected header '" + std::string(detail::kHeader) + "', got '" +
                      std::string(header) + "'");
  }

  std::vector<RawSubject> out;
  std::unordered_set<std::string> seen_ids;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view row = detail::strip_cr(raw);
    if (row.empty()) continue;

    std::array<std::string_view, 5> fields;
    std::size_t n_fields = 0;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= row.size(); ++i) {
      if (i == row.size() || row[i] == ',') {
        if (n_fields == 5) detail::fail(line_no, "row", "expected 5 comma-separated fields");
        fields[n_fields++] = row.substr(start, i - start);
        start = i + 1;
      }
    }
    if (n_fields != 5) detail::fail(line_no, "row", "expected 5 comma-separated fields");

    RawSubject s;
    s.line = line_no;
    s.id = std::string(fields[0]);
    if (s.id.empty()) detail::fail(line_no, "id", "must be nonempty");
    if (!seen_ids.insert(s.id).second) {
      detail::fail(line_no, "id", "duplicate id '" + s.id + "'");
    }
    s.transplant = detail::parse_flag(fields[3], line_no, "transplant");
    s.dead = detail::parse_flag(fields[4], line_no, "dead");
    if (fields[1].empty()) {
      if (s.transplant) detail::fail(line_no, "wait_time", "must be present when transplant=1");
      s.wait_time = std::nullopt;
    } else {
      s.wait_time = detail::parse_nonneg(fields[1], line_no, "wait_time");
    }
    s.survival_time = detail::parse_nonneg(fields[2], line_no, "survival_time");
    out.push_back(std::move(s));
  }
  return out;
}

inline std::vector<RawSubject> parse_csv_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw parse_error("cannot open '" + path + "'");
  return parse_csv(in);
}

struct CleaningReport {
  struct DroppedRow {
    std::string id;
    std::string reason;
  };
  std::vector<DroppedRow> dropped;
  likelihood::CategoryCounts counts;
  std::size_t input_count = 0;

  nlohmann::json to_json() const {
    nlohmann::json dropped_json = nlohmann::json::array();
    for (const auto& d : dropped) dropped_json.push_back({{"id", d.id}, {"reason", d.reason}});
    return {{"dropped", dropped_json},
            {"counts",
             {{"p", counts.p}, {"q", counts.q}, {"r", counts.r}, {"censored", counts.censored}}}};
  }
};

struct ClassifyResult {
  likelihood::Dataset dataset;
  CleaningReport report;
};

// Map raw rows to observation categories:
//   transplant=1, dead=1 -> both events observed (wait, survival)
//   transplant=1, dead=0 -> non-fatal observed, death censored (wait, survival)
//   transplant=0, dead=1 -> fatal observed with no prior non-fatal event
//   transplant=0, dead=0 -> nothing observed by the censoring time
// Rows with a zero event time are dropped and reported.  Ordering
// violations (a transplant after death or after last contact) are data
// corruption and abort classification rather than being repaired.
inline ClassifyResult classify(const std::vector<RawSubject>& subjects) {
  std::vector<likelihood::SubjectRecord> records;
  records.reserve(subjects.size());
  CleaningReport report;
  report.input_count = subjects.size();

  for (const auto& s : subjects) {
    if (s.survival_time == 0.0) {
      report.dropped.push_back({s.id, "survival_time is zero"});
      continue;
    }
    using likelihood::Category;
    if (s.transplant) {
      if (!s.wait_time) {
        detail::fail(s.line, "wait_time", "must be present when transplant=1");
      }
      const double wait = *s.wait_time;
      if (wait == 0.0) {
        report.dropped.push_back({s.id, "wait_time is zero"});
        continue;
      }
      if (s.dead && wait >= s.survival_time) {
        std::ostringstream msg;
        msg << "line " << s.line << ", id " << s.id << ": wait_time " << wait
            << " >= survival_time " << s.survival_time
            << " with dead=1 violates event ordering (the non-fatal event must precede death)";
        throw parse_error(msg.str());
      }
      if (!s.dead && wait > s.survival_time) {
        std::ostringstream msg;
        msg << "line " << s.line << ", id " << s.id << ": wait_time " << wait
            << " > survival_time " << s.survival_time
            << " is inconsistent (transplant after the last-seen time)";
        throw parse_error(msg.str());
      }
      records.push_back({s.dead ? Category::BothObserved : Category::AObservedBCensored, wait,
                         s.survival_time});
    } else {
      records.push_back({s.dead ? Category::BObservedNoA : Category::BothCensored,
                         s.survival_time, s.survival_time});
    }
  }

  if (records.empty()) {
    throw parse_error("no records: every input row was dropped or the file had no data rows");
  }
  auto dataset = likelihood::Dataset::from_records(std::move(records));
  report.counts = dataset.counts();
  return {std::move(dataset), std::move(report)};
}

namespace detail {

inline void append_double(std::string& out, double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, ptr);  // shortest form that round-trips exactly
}

}  // namespace detail

// Emit a dataset in the canonical CSV schema (ids generated as s1..sN).
// parse_csv + classify of the output reproduces the dataset exactly.
inline void write_csv(const likelihood::Dataset& dataset, std::ostream& out) {
  std::string buf(detail::kHeader);
  buf.push_back('\n');
  std::size_t n = 0;
  for (const auto& r : dataset.records()) {
    using likelihood::Category;
    buf += "s" + std::to_string(++n) + ",";
    const bool transplant =
        r.category == Category::BothObserved || r.category == Category::AObservedBCensored;
    if (transplant) detail::append_double(buf, r.t_x);
    buf.push_back(',');
    detail::append_double(buf, r.t_y);
    const bool dead =
        r.category == Category::BothObserved || r.category == Category::BObservedNoA;
    buf += transplant ? ",1" : ",0";
    buf += dead ? ",1\n" : ",0\n";
  }
  out << buf;
}

}  // namespace biweibull::data
