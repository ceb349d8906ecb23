#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "dnsp/common.hpp"

namespace dnsp {

// One measured point. NMSE or BER may be absent (NaN) depending on the
// producing stage.
struct ResultRow {
  std::string method;
  double snr_db = 0.0;
  double nmse = std::numeric_limits<double>::quiet_NaN();
  double ber = std::numeric_limits<double>::quiet_NaN();
  std::size_t n_frames = 0;
  std::uint64_t seed = 0;
};

namespace detail {

// Fixed-format printing; reports must be byte-identical across reruns.
inline std::string fmt_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

}  // namespace detail

inline std::string to_csv(const std::vector<ResultRow>& rows) {
  std::ostringstream os;
  os << "method,snr_db,nmse,ber,n_frames,seed\n";
  for (const auto& r : rows) {
    os << r.method << ',' << detail::fmt_double(r.snr_db) << ','
       << detail::fmt_double(r.nmse) << ',' << detail::fmt_double(r.ber) << ','
       << r.n_frames << ',' << r.seed << '\n';
  }
  return os.str();
}

inline std::string json_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') {
      out += '\\';
      out += c;
    } else if (c == '\n') {
      out += "\\n";
    } else {
      out += c;
    }
  }
  return out;
}

// JSON mirror of the CSV with the config snapshot embedded, so a result
// file is self-describing.
inline std::string to_json(const std::vector<ResultRow>& rows,
                           const std::string& config_snapshot) {
  std::ostringstream os;
  os << "{\n  \"config\": \"" << json_escape(config_snapshot) << "\",\n  \"rows\": [\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    os << "    {\"method\": \"" << json_escape(r.method) << "\", \"snr_db\": "
       << detail::fmt_double(r.snr_db) << ", \"nmse\": ";
    if (std::isnan(r.nmse))
      os << "null";
    else
      os << detail::fmt_double(r.nmse);
    os << ", \"ber\": ";
    if (std::isnan(r.ber))
      os << "null";
    else
      os << detail::fmt_double(r.ber);
    os << ", \"n_frames\": " << r.n_frames << ", \"seed\": " << r.seed << "}"
       << (i + 1 < rows.size() ? "," : "") << "\n";
  }
  os << "  ]\n}\n";
  return os.str();
}

// Two-column gnuplot series, one file per (method, metric); x is SNR in dB
// and y is the metric on a log axis at plot time.
inline std::map<std::string, std::string> to_series(const std::vector<ResultRow>& rows) {
  std::map<std::string, std::string> out;
  for (const auto& r : rows) {
    if (!std::isnan(r.nmse))
      out[r.method + "_nmse.dat"] +=
          detail::fmt_double(r.snr_db) + " " + detail::fmt_double(r.nmse) + "\n";
    if (!std::isnan(r.ber))
      out[r.method + "_ber.dat"] +=
          detail::fmt_double(r.snr_db) + " " + detail::fmt_double(r.ber) + "\n";
  }
  return out;
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw input_error("report: cannot write " + path);
  out << content;
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw input_error("report: cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace dnsp
