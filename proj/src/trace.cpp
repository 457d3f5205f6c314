#include <charconv>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "memvr/bench.hpp"
#include "memvr/errors.hpp"

namespace memvr {

namespace {

constexpr const char* kHeader = "seed,algorithm,datapoint_evals,gradient_evals,suboptimality,wall_seconds";

template <class T>
T parse_field(std::string_view tok, std::size_t line_no, const char* name) {
  T v{};
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size())
    throw DataError(fmt::format("trace line {}: bad {} '{}'", line_no, name, tok));
  return v;
}

}  // namespace

std::string format_trace(const MetricsTrace& trace) {
  MetricsTrace sorted = trace;
  sorted.sort();
  std::string out = kHeader;
  out += '\n';
  for (const auto& r : sorted.rows)
    out += fmt::format("{},{},{},{},{:.17g},{:.17g}\n", r.seed, r.algorithm, r.datapoint_evals, r.gradient_evals,
                       r.suboptimality, r.wall_seconds);
  return out;
}

void write_trace(const MetricsTrace& trace, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(fmt::format("cannot write trace '{}'", path.string()));
  out << format_trace(trace);
  if (!out) throw DataError(fmt::format("write failed for '{}'", path.string()));
}

MetricsTrace parse_trace(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kHeader) throw DataError("trace is missing the CSV header");
  MetricsTrace trace;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string_view> f;
    std::string_view rest(line);
    for (;;) {
      const auto comma = rest.find(',');
      f.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (f.size() != 6) throw DataError(fmt::format("trace line {}: expected 6 fields, got {}", line_no, f.size()));
    TraceRow r;
    r.seed = parse_field<std::uint64_t>(f[0], line_no, "seed");
    r.algorithm = std::string(f[1]);
    r.datapoint_evals = parse_field<std::uint64_t>(f[2], line_no, "datapoint_evals");
    r.gradient_evals = parse_field<std::uint64_t>(f[3], line_no, "gradient_evals");
    r.suboptimality = parse_field<double>(f[4], line_no, "suboptimality");
    r.wall_seconds = parse_field<double>(f[5], line_no, "wall_seconds");
    trace.rows.push_back(std::move(r));
  }
  return trace;
}

MetricsTrace read_trace(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(fmt::format("cannot read trace '{}'", path.string()));
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_trace(buf.str());
}

}  // namespace memvr
