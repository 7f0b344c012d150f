#include "stlsgd/dataset.hpp"

#include <zlib.h>

#include <algorithm>
#include <charconv>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <stdexcept>

#include "stlsgd/errors.hpp"
#include "stlsgd/rng.hpp"

namespace stlsgd {

namespace {

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) {
    s.remove_prefix(1);
  }
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

double parse_number(std::string_view tok, std::size_t line, const char* what) {
  double v = 0.0;
  std::string_view t = tok;
  if (!t.empty() && t.front() == '+') t.remove_prefix(1);  // from_chars has no '+'
  const char* begin = t.data();
  const char* end = begin + t.size();
  auto [p, ec] = std::from_chars(begin, end, v);
  if (t.empty() || ec != std::errc() || p != end) {
    throw ParseError(std::string("malformed ") + what + " '" + std::string(tok) + "'", line);
  }
  return v;
}

struct RawRow {
  Dataset::Row row;
  double label;
};

}  // namespace

std::uint64_t Dataset::content_hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  std::uint64_t n = rows.size();
  std::uint64_t f = num_features;
  h = fnv1a(h, &n, sizeof n);
  h = fnv1a(h, &f, sizeof f);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    h = fnv1a(h, &labels[i], sizeof(double));
    const auto& r = rows[i];
    std::uint64_t m = r.idx.size();
    h = fnv1a(h, &m, sizeof m);
    if (m > 0) {
      h = fnv1a(h, r.idx.data(), m * sizeof(std::uint32_t));
      h = fnv1a(h, r.val.data(), m * sizeof(double));
    }
  }
  return h;
}

Dataset parse_libsvm(std::string_view text, const ParseOptions& opts) {
  std::vector<RawRow> raw;
  std::size_t max_index = 0;  // 1-based
  std::size_t line_no = 0;

  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t eol = text.find('\n', pos);
    std::string_view line = (eol == std::string_view::npos) ? text.substr(pos)
                                                            : text.substr(pos, eol - pos);
    pos = (eol == std::string_view::npos) ? text.size() + 1 : eol + 1;
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;

    std::size_t sp = line.find_first_of(" \t");
    std::string_view label_tok = (sp == std::string_view::npos) ? line : line.substr(0, sp);
    RawRow r;
    r.label = parse_number(label_tok, line_no, "label");

    std::string_view rest = (sp == std::string_view::npos) ? std::string_view{}
                                                           : trim(line.substr(sp + 1));
    long long prev_index = 0;
    while (!rest.empty()) {
      std::size_t tok_end = rest.find_first_of(" \t");
      std::string_view tok = (tok_end == std::string_view::npos) ? rest : rest.substr(0, tok_end);
      rest = (tok_end == std::string_view::npos) ? std::string_view{}
                                                 : trim(rest.substr(tok_end + 1));

      std::size_t colon = tok.find(':');
      if (colon == std::string_view::npos) {
        throw ParseError("malformed feature '" + std::string(tok) + "' (expected index:value)",
                         line_no);
      }
      double idx_d = parse_number(tok.substr(0, colon), line_no, "feature index");
      auto idx = static_cast<long long>(idx_d);
      if (idx_d != static_cast<double>(idx) || idx <= 0) {
        throw ParseError("feature index '" + std::string(tok.substr(0, colon)) +
                             "' is not a positive integer",
                         line_no);
      }
      if (idx <= prev_index) {
        throw ParseError("feature indices not ascending at index " + std::to_string(idx),
                         line_no);
      }
      double val = parse_number(tok.substr(colon + 1), line_no, "feature value");
      r.row.idx.push_back(static_cast<std::uint32_t>(idx - 1));
      r.row.val.push_back(val);
      prev_index = idx;
      max_index = std::max(max_index, static_cast<std::size_t>(idx));
    }
    raw.push_back(std::move(r));
  }

  if (raw.empty()) throw ParseError("empty input: no examples", line_no);

  // Label mapping: explicit class pair wins; otherwise {-1,+1} passes through,
  // {0,1} maps 0 to -1, and any other two-valued set maps the smaller value
  // to +1 (the configured default for digit-pair extracts).
  Dataset out;
  if (opts.positive_class || opts.negative_class) {
    std::optional<double> pos = opts.positive_class;
    std::optional<double> neg = opts.negative_class;
    if (!pos || !neg) {
      std::map<double, std::size_t> hist;
      for (const auto& r : raw) ++hist[r.label];
      double known = pos ? *pos : *neg;
      std::optional<double> other;
      for (const auto& [lbl, cnt] : hist) {
        if (lbl != known) {
          if (other) {
            throw ParseError("ambiguous label mapping: more than two classes present", 0);
          }
          other = lbl;
        }
      }
      if (!other) throw ParseError("only one label class present", 0);
      if (pos) neg = other;
      else pos = other;
    }
    for (auto& r : raw) {
      if (r.label == *pos) {
        out.rows.push_back(std::move(r.row));
        out.labels.push_back(1.0);
      } else if (r.label == *neg) {
        out.rows.push_back(std::move(r.row));
        out.labels.push_back(-1.0);
      }
    }
    if (out.rows.empty()) throw ParseError("no examples match the configured class pair", 0);
  } else {
    std::map<double, std::size_t> hist;
    for (const auto& r : raw) ++hist[r.label];
    bool pm_one = true;
    bool zero_one = true;
    for (const auto& [lbl, cnt] : hist) {
      pm_one = pm_one && (lbl == -1.0 || lbl == 1.0);
      zero_one = zero_one && (lbl == 0.0 || lbl == 1.0);
    }
    double pos;
    if (pm_one) {
      pos = 1.0;
    } else if (zero_one) {
      pos = 1.0;
    } else if (hist.size() == 2) {
      pos = hist.begin()->first;   // smaller label becomes +1
    } else {
      throw ParseError("cannot infer label mapping for " + std::to_string(hist.size()) +
                           " classes; set positive_class/negative_class",
                       0);
    }
    for (auto& r : raw) {
      out.rows.push_back(std::move(r.row));
      out.labels.push_back(r.label == pos ? 1.0 : -1.0);
    }
  }

  out.num_features = opts.num_features.value_or(max_index);
  if (out.num_features < max_index) {
    throw ParseError("num_features override " + std::to_string(out.num_features) +
                         " is below the largest index seen (" + std::to_string(max_index) + ")",
                     0);
  }
  return out;
}

namespace {

std::string inflate_gzip(const std::string& bytes) {
  std::string out;
  z_stream zs;
  std::memset(&zs, 0, sizeof zs);
  if (inflateInit2(&zs, 16 + MAX_WBITS) != Z_OK) {
    throw std::runtime_error("zlib initialization failed");
  }
  zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(bytes.data()));
  zs.avail_in = static_cast<uInt>(bytes.size());
  char buf[1 << 16];
  int rc = Z_OK;
  while (true) {
    zs.next_out = reinterpret_cast<Bytef*>(buf);
    zs.avail_out = sizeof buf;
    rc = inflate(&zs, Z_NO_FLUSH);
    out.append(buf, sizeof buf - zs.avail_out);
    if (rc == Z_STREAM_END) {
      if (zs.avail_in == 0) break;
      // concatenated gzip members
      if (inflateReset2(&zs, 16 + MAX_WBITS) != Z_OK) {
        rc = Z_DATA_ERROR;
        break;
      }
      continue;
    }
    if (rc != Z_OK) break;
  }
  inflateEnd(&zs);
  if (rc != Z_STREAM_END) throw std::runtime_error("gzip stream is corrupt");
  return out;
}

}  // namespace

Dataset load_libsvm_file(const std::string& path, const ParseOptions& opts) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open dataset file: " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() >= 2 && static_cast<unsigned char>(bytes[0]) == 0x1f &&
      static_cast<unsigned char>(bytes[1]) == 0x8b) {
    bytes = inflate_gzip(bytes);
  }
  return parse_libsvm(bytes, opts);
}

Dataset synthetic_two_class(std::size_t n, std::size_t dim, std::uint64_t seed) {
  if (n == 0 || dim == 0) throw std::invalid_argument("empty synthetic dataset");
  Dataset out;
  out.num_features = dim;
  out.rows.reserve(n);
  out.labels.reserve(n);
  // The shared offset breaks the (a, y) -> (-a, -y) symmetry, so label-skewed
  // shards disagree the way real corpora do.
  const double shift = 1.5 / std::sqrt(static_cast<double>(dim));
  const double offset = 1.0 / std::sqrt(static_cast<double>(dim));
  for (std::size_t i = 0; i < n; ++i) {
    double y = (i % 2 == 0) ? 1.0 : -1.0;
    RngStream rng(seed, kMetaStream + 7, i);
    Dataset::Row row;
    row.idx.resize(dim);
    row.val.resize(dim);
    for (std::size_t j = 0; j < dim; ++j) {
      row.idx[j] = static_cast<std::uint32_t>(j);
      row.val[j] = y * shift + offset + rng.next_gaussian();
    }
    out.rows.push_back(std::move(row));
    out.labels.push_back(y);
  }
  return out;
}

}  // namespace stlsgd
