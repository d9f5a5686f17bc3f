#pragma once

// Flow-record ingestion: parsing, protocol filtering and sliding windows.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "botfuse/error.hpp"

namespace botfuse {

enum class Proto : std::uint8_t { TCP, UDP, OTHER };
enum class Label : std::uint8_t { BOT, LEGIT, UNKNOWN };

inline const char* to_string(Proto p) {
  switch (p) {
    case Proto::TCP: return "tcp";
    case Proto::UDP: return "udp";
    default: return "other";
  }
}

inline const char* to_string(Label l) {
  switch (l) {
    case Label::BOT: return "bot";
    case Label::LEGIT: return "legit";
    default: return "unknown";
  }
}

struct FlowRecord {
  double ts_start = 0.0;
  double duration = 0.0;
  Proto proto = Proto::OTHER;
  std::string src_ip;
  std::uint16_t src_port = 0;
  std::string dst_ip;
  std::uint16_t dst_port = 0;
  double src_bytes = 0.0;
  double dst_bytes = 0.0;
  Label label = Label::UNKNOWN;

  bool operator==(const FlowRecord&) const = default;
};

struct WindowSlice {
  double window_start = 0.0;
  double window_len = 60.0;
  std::vector<FlowRecord> records;
};

enum class FlowFormat { Canonical, Binetflow };

inline FlowFormat parse_flow_format(std::string_view name) {
  if (name == "canonical") return FlowFormat::Canonical;
  if (name == "binetflow") return FlowFormat::Binetflow;
  throw Error(ErrorCode::UnknownFormat, "unknown flow format '" + std::string(name) + "'");
}

struct ParseReport {
  std::vector<FlowRecord> records;
  std::size_t total_lines = 0;
  std::size_t malformed = 0;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    std::size_t next = line.find(sep, pos);
    if (next == std::string_view::npos) {
      out.push_back(trim(line.substr(pos)));
      break;
    }
    out.push_back(trim(line.substr(pos, next - pos)));
    pos = next + 1;
  }
  return out;
}

inline std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

inline std::optional<double> to_double(std::string_view s) {
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

inline std::optional<std::uint16_t> to_port(std::string_view s) {
  if (s.empty()) return std::nullopt;
  int base = 10;
  if (s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) {
    s.remove_prefix(2);
    base = 16;
  }
  unsigned v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v, base);
  if (ec != std::errc() || ptr != s.data() + s.size() || v > 65535) return std::nullopt;
  return static_cast<std::uint16_t>(v);
}

inline Proto to_proto(std::string_view s) {
  const std::string p = lower(s);
  if (p == "tcp") return Proto::TCP;
  if (p == "udp") return Proto::UDP;
  return Proto::OTHER;
}

// Howard Hinnant's days_from_civil.
inline std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

/// "YYYY/MM/DD hh:mm:ss[.frac]" (also accepts '-' separators), read as UTC.
inline std::optional<double> parse_timestamp(std::string_view s) {
  if (auto v = to_double(s)) return v;
  if (s.size() < 19) return std::nullopt;
  auto num = [&](std::size_t pos, std::size_t len) -> std::optional<int> {
    int v = 0;
    auto [ptr, ec] = std::from_chars(s.data() + pos, s.data() + pos + len, v);
    if (ec != std::errc() || ptr != s.data() + pos + len) return std::nullopt;
    return v;
  };
  auto y = num(0, 4), mo = num(5, 2), d = num(8, 2), h = num(11, 2), mi = num(14, 2);
  if (!y || !mo || !d || !h || !mi) return std::nullopt;
  auto sec = to_double(s.substr(17));
  if (!sec) return std::nullopt;
  if (*mo < 1 || *mo > 12 || *d < 1 || *d > 31) return std::nullopt;
  const auto days = days_from_civil(*y, static_cast<unsigned>(*mo), static_cast<unsigned>(*d));
  return static_cast<double>(days) * 86400.0 + *h * 3600.0 + *mi * 60.0 + *sec;
}

inline std::optional<FlowRecord> parse_canonical_line(std::string_view line) {
  auto f = split(line, ',');
  if (f.size() != 9 && f.size() != 10) return std::nullopt;
  FlowRecord r;
  auto ts = to_double(f[0]);
  auto dur = to_double(f[1]);
  auto sp = to_port(f[4]);
  auto dp = to_port(f[6]);
  auto sb = to_double(f[7]);
  auto db = to_double(f[8]);
  if (!ts || !dur || !sp || !dp || !sb || !db) return std::nullopt;
  if (*dur < 0 || *sb < 0 || *db < 0 || f[3].empty() || f[5].empty()) return std::nullopt;
  r.ts_start = *ts;
  r.duration = *dur;
  r.proto = to_proto(f[2]);
  r.src_ip = std::string(f[3]);
  r.src_port = *sp;
  r.dst_ip = std::string(f[5]);
  r.dst_port = *dp;
  r.src_bytes = *sb;
  r.dst_bytes = *db;
  if (f.size() == 10 && !f[9].empty()) {
    const std::string l = lower(f[9]);
    if (l == "bot") r.label = Label::BOT;
    else if (l == "legit") r.label = Label::LEGIT;
    else if (l == "unknown") r.label = Label::UNKNOWN;
    else return std::nullopt;
  }
  return r;
}

inline bool looks_like_canonical_header(std::string_view line) {
  auto f = split(line, ',');
  return !f.empty() && !to_double(f[0]).has_value();
}

/// Column positions for CTU-13 ".binetflow" exports, resolved from the header.
struct BinetflowColumns {
  std::size_t start = 0, dur = 0, proto = 0, src = 0, sport = 0, dst = 0, dport = 0, tot_bytes = 0,
              src_bytes = 0;
  std::optional<std::size_t> label;
  std::size_t width = 0;

  static std::optional<BinetflowColumns> from_header(std::string_view line) {
    auto f = split(line, ',');
    std::map<std::string, std::size_t> idx;
    for (std::size_t i = 0; i < f.size(); ++i) idx[lower(f[i])] = i;
    auto get = [&](const char* k) -> std::optional<std::size_t> {
      auto it = idx.find(k);
      if (it == idx.end()) return std::nullopt;
      return it->second;
    };
    BinetflowColumns c;
    auto s = get("starttime"), d = get("dur"), p = get("proto"), sa = get("srcaddr"), spt = get("sport"),
         da = get("dstaddr"), dpt = get("dport"), tb = get("totbytes"), sb = get("srcbytes");
    if (!s || !d || !p || !sa || !spt || !da || !dpt || !tb || !sb) return std::nullopt;
    c.start = *s, c.dur = *d, c.proto = *p, c.src = *sa, c.sport = *spt, c.dst = *da, c.dport = *dpt;
    c.tot_bytes = *tb, c.src_bytes = *sb, c.label = get("label");
    c.width = f.size();
    return c;
  }
};

inline std::optional<FlowRecord> parse_binetflow_line(std::string_view line, const BinetflowColumns& c) {
  auto f = split(line, ',');
  if (f.size() < c.width) return std::nullopt;
  FlowRecord r;
  auto ts = parse_timestamp(f[c.start]);
  auto dur = to_double(f[c.dur]);
  auto tb = to_double(f[c.tot_bytes]);
  auto sb = to_double(f[c.src_bytes]);
  if (!ts || !dur || !tb || !sb || *dur < 0 || *sb < 0 || *tb < *sb) return std::nullopt;
  if (f[c.src].empty() || f[c.dst].empty()) return std::nullopt;
  r.ts_start = *ts;
  r.duration = *dur;
  r.proto = to_proto(f[c.proto]);
  r.src_ip = std::string(f[c.src]);
  r.dst_ip = std::string(f[c.dst]);
  // ICMP and friends leave ports blank or symbolic; they are filtered later anyway.
  r.src_port = to_port(f[c.sport]).value_or(0);
  r.dst_port = to_port(f[c.dport]).value_or(0);
  r.src_bytes = *sb;
  r.dst_bytes = *tb - *sb;
  if (c.label) {
    const std::string l = lower(f[*c.label]);
    // Flows towards a bot are mostly replies from hosts outside the botnet.
    if (l.find("to-botnet") != std::string::npos) r.label = Label::UNKNOWN;
    else if (l.find("botnet") != std::string::npos) r.label = Label::BOT;
    else if (l.find("normal") != std::string::npos) r.label = Label::LEGIT;
  }
  return r;
}

}  // namespace detail

/// Parses flow records from an in-memory stream. Malformed lines are counted
/// and skipped; throws EmptyAfterParse if nothing survives.
inline ParseReport parse_flow_stream(std::istream& in, FlowFormat format) {
  ParseReport report;
  std::string line;
  bool first = true;
  std::optional<detail::BinetflowColumns> columns;
  while (std::getline(in, line)) {
    std::string_view view = detail::trim(line);
    if (view.empty()) continue;
    if (first) {
      first = false;
      if (format == FlowFormat::Binetflow) {
        columns = detail::BinetflowColumns::from_header(view);
        if (!columns) throw Error(ErrorCode::UnknownFormat, "binetflow input lacks a recognizable header");
        continue;
      }
      if (detail::looks_like_canonical_header(view)) continue;
    }
    ++report.total_lines;
    auto rec = format == FlowFormat::Canonical ? detail::parse_canonical_line(view)
                                               : detail::parse_binetflow_line(view, *columns);
    if (rec) {
      report.records.push_back(std::move(*rec));
    } else {
      ++report.malformed;
    }
  }
  if (report.records.empty()) {
    throw Error(ErrorCode::EmptyAfterParse,
                "no valid flow records (" + std::to_string(report.malformed) + " malformed lines)");
  }
  return report;
}

inline ParseReport parse_flow_file(const std::filesystem::path& path, FlowFormat format) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::FileNotFound, path.string());
  return parse_flow_stream(in, format);
}

inline ParseReport parse_flow_file(const std::filesystem::path& path, std::string_view format_name) {
  return parse_flow_file(path, parse_flow_format(format_name));
}

/// Writes records in the canonical CSV layout, with header.
inline void write_canonical_csv(std::ostream& out, const std::vector<FlowRecord>& records) {
  out << "ts_start,duration,proto,src_ip,src_port,dst_ip,dst_port,src_bytes,dst_bytes,label\n";
  char buf[64];
  auto num = [&](double v) {
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
  };
  for (const auto& r : records) {
    out << num(r.ts_start) << ',' << num(r.duration) << ',' << to_string(r.proto) << ',' << r.src_ip << ','
        << r.src_port << ',' << r.dst_ip << ',' << r.dst_port << ',' << num(r.src_bytes) << ','
        << num(r.dst_bytes) << ',';
    if (r.label != Label::UNKNOWN) out << to_string(r.label);
    out << '\n';
  }
}

inline std::vector<FlowRecord> filter_tcp_udp(const std::vector<FlowRecord>& records) {
  std::vector<FlowRecord> out;
  out.reserve(records.size());
  std::copy_if(records.begin(), records.end(), std::back_inserter(out),
               [](const FlowRecord& r) { return r.proto == Proto::TCP || r.proto == Proto::UDP; });
  return out;
}

/// Sliding windows keyed by flow start time. Window k starts at
/// t0 + k*stride, where t0 is the earliest start snapped down to a stride
/// boundary. Empty windows are omitted.
inline std::vector<WindowSlice> slice_windows(const std::vector<FlowRecord>& records, double window_len = 60.0,
                                              double stride = 10.0) {
  if (!(window_len > 0) || !(stride > 0) || stride > window_len || !std::isfinite(window_len) ||
      !std::isfinite(stride)) {
    throw Error(ErrorCode::InvalidArgument, "window parameters require 0 < stride <= window_len");
  }
  if (records.empty()) return {};
  double min_ts = records.front().ts_start;
  for (const auto& r : records) min_ts = std::min(min_ts, r.ts_start);
  const double t0 = std::floor(min_ts / stride) * stride;
  auto start_of = [&](std::int64_t k) { return t0 + static_cast<double>(k) * stride; };

  std::map<std::int64_t, std::vector<const FlowRecord*>> buckets;
  for (const auto& r : records) {
    const double rel = r.ts_start - t0;
    // Candidate range, widened by one on each side and then checked exactly.
    std::int64_t hi = static_cast<std::int64_t>(std::floor(rel / stride)) + 1;
    std::int64_t lo = static_cast<std::int64_t>(std::floor((rel - window_len) / stride));
    lo = std::max<std::int64_t>(lo, 0);
    for (std::int64_t k = lo; k <= hi; ++k) {
      const double s = start_of(k);
      if (s <= r.ts_start && r.ts_start < s + window_len) buckets[k].push_back(&r);
    }
  }

  std::vector<WindowSlice> out;
  out.reserve(buckets.size());
  for (auto& [k, recs] : buckets) {
    WindowSlice w;
    w.window_start = start_of(k);
    w.window_len = window_len;
    w.records.reserve(recs.size());
    for (const auto* r : recs) w.records.push_back(*r);
    out.push_back(std::move(w));
  }
  return out;
}

}  // namespace botfuse
