// Copyright the liret authors. Licensed under the terms of the Apache 2.0 license. See LICENSE in the project root.
#include "liret/io.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

static_assert(std::endian::native == std::endian::little,
              "container i/o assumes a little-endian host");

namespace liret {
namespace {

constexpr char kMagicEmbeddings[4] = {'C', 'L', 'M', 'R'};
constexpr char kMagicFeatures[4] = {'C', 'L', 'M', 'F'};
constexpr uint32_t kVersion = 1;

void put_bytes(std::ostream& out, const void* p, size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  if (!out) raise(Errc::io_error, "short write");
}

template <typename T>
void put_scalar(std::ostream& out, T v) {
  put_bytes(out, &v, sizeof v);
}

void put_str16(std::ostream& out, const std::string& s) {
  if (s.size() > UINT16_MAX) raise(Errc::invalid_argument, "string too long: " + s.substr(0, 32));
  put_scalar<uint16_t>(out, static_cast<uint16_t>(s.size()));
  put_bytes(out, s.data(), s.size());
}

struct Reader {
  std::istream& in;
  const std::string& origin;

  void bytes(void* p, size_t n) {
    in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<size_t>(in.gcount()) != n)
      raise(Errc::truncated, origin + ": unexpected end of file");
  }

  template <typename T>
  T scalar() {
    T v;
    bytes(&v, sizeof v);
    return v;
  }

  std::string str16() {
    const uint16_t n = scalar<uint16_t>();
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
};

}  // namespace

void write_container(std::ostream& out, const Container& c) {
  if (c.dim < 1) raise(Errc::invalid_argument, "container dim must be >= 1");
  put_bytes(out, c.kind == PayloadKind::embeddings ? kMagicEmbeddings : kMagicFeatures, 4);
  put_scalar<uint32_t>(out, kVersion);
  put_scalar<uint32_t>(out, static_cast<uint32_t>(c.dim));
  put_scalar<uint8_t>(out, static_cast<uint8_t>(c.modalities.size()));
  for (const auto& name : c.modalities.names()) put_str16(out, name);
  put_scalar<uint64_t>(out, c.docs.size());
  for (const Document& d : c.docs) {
    if (d.modalities.size() != c.modalities.size())
      raise(Errc::invalid_argument, "doc " + d.id + ": modality slots do not match the set");
    put_str16(out, d.id);
    uint8_t bitmap = 0;
    for (size_t m = 0; m < d.modalities.size(); ++m)
      if (d.modalities[m]) bitmap |= static_cast<uint8_t>(1u << m);
    put_scalar<uint8_t>(out, bitmap);
    for (size_t m = 0; m < d.modalities.size(); ++m) {
      if (!d.modalities[m]) continue;
      const TokenMatrixF& rows = *d.modalities[m];
      if (rows.cols() != c.dim)
        raise(Errc::dim_mismatch, "doc " + d.id + "/" + c.modalities.name(m) + ": " +
                                      std::to_string(rows.cols()) + " cols, container dim " +
                                      std::to_string(c.dim));
      if (rows.rows() < 1)
        raise(Errc::invalid_argument, "doc " + d.id + ": present modality with zero rows");
      put_scalar<uint32_t>(out, static_cast<uint32_t>(rows.rows()));
      put_bytes(out, rows.data(), sizeof(float) * static_cast<size_t>(rows.size()));
    }
  }
}

void write_container(const std::string& path, const Container& c) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) raise(Errc::io_error, "cannot open for write: " + path);
  write_container(out, c);
  out.flush();
  if (!out) raise(Errc::io_error, "write failed: " + path);
}

Container read_container(std::istream& in, const std::string& origin) {
  Reader r{in, origin};
  char magic[4];
  r.bytes(magic, 4);
  Container c;
  if (std::memcmp(magic, kMagicEmbeddings, 4) == 0) {
    c.kind = PayloadKind::embeddings;
  } else if (std::memcmp(magic, kMagicFeatures, 4) == 0) {
    c.kind = PayloadKind::features;
  } else {
    raise(Errc::bad_magic, origin + ": not a token container");
  }
  const uint32_t version = r.scalar<uint32_t>();
  if (version != kVersion)
    raise(Errc::bad_version,
          origin + ": version " + std::to_string(version) + ", expected " + std::to_string(kVersion));
  const uint32_t dim = r.scalar<uint32_t>();
  if (dim < 1) raise(Errc::parse_error, origin + ": dim 0");
  c.dim = static_cast<Eigen::Index>(dim);
  const uint8_t n_mods = r.scalar<uint8_t>();
  if (n_mods < 1 || n_mods > kMaxModalities)
    raise(Errc::parse_error, origin + ": modality count " + std::to_string(n_mods));
  std::vector<std::string> names;
  names.reserve(n_mods);
  for (int m = 0; m < n_mods; ++m) names.push_back(r.str16());
  c.modalities = ModalitySet(names);
  const uint64_t n_docs = r.scalar<uint64_t>();
  c.docs.reserve(n_docs);
  for (uint64_t i = 0; i < n_docs; ++i) {
    Document d(r.str16(), c.modalities.size());
    const uint8_t bitmap = r.scalar<uint8_t>();
    if (bitmap >> n_mods)
      raise(Errc::parse_error, origin + ": doc " + d.id + " flags undeclared modality");
    for (size_t m = 0; m < c.modalities.size(); ++m) {
      if (!(bitmap & (1u << m))) continue;
      const uint32_t rows = r.scalar<uint32_t>();
      if (rows < 1) raise(Errc::parse_error, origin + ": doc " + d.id + " empty modality block");
      TokenMatrixF mat(rows, c.dim);
      r.bytes(mat.data(), sizeof(float) * static_cast<size_t>(mat.size()));
      d.modalities[m] = std::move(mat);
    }
    c.docs.push_back(std::move(d));
  }
  return c;
}

namespace {

Container read_container_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(Errc::io_error, "cannot open: " + path);
  Container c = read_container(in, path);
  in.peek();
  if (!in.eof()) raise(Errc::parse_error, path + ": trailing bytes after payload");
  return c;
}

}  // namespace

Container read_container(const std::string& path) { return read_container_file(path); }

Container read_embeddings(const std::string& path) {
  Container c = read_container_file(path);
  if (c.kind != PayloadKind::embeddings)
    raise(Errc::bad_magic, path + ": holds raw features, not embeddings; encode it first");
  return c;
}

Container read_features(const std::string& path) {
  Container c = read_container_file(path);
  if (c.kind != PayloadKind::features)
    raise(Errc::bad_magic, path + ": holds embeddings, not raw features");
  return c;
}

namespace {

// Splits a line into exactly `n` tab-separated fields.
std::vector<std::string> split_fields(const std::string& line, size_t n, const std::string& path,
                                      size_t line_no) {
  std::vector<std::string> out;
  size_t start = 0;
  while (true) {
    const size_t tab = line.find('\t', start);
    if (tab == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  if (out.size() != n)
    raise(Errc::parse_error, path + ":" + std::to_string(line_no) + ": expected " +
                                 std::to_string(n) + " fields, got " + std::to_string(out.size()));
  return out;
}

long parse_long(const std::string& s, const std::string& path, size_t line_no) {
  if (s.empty()) raise(Errc::parse_error, path + ":" + std::to_string(line_no) + ": empty integer");
  char* end = nullptr;
  const long v = std::strtol(s.c_str(), &end, 10);
  if (end != s.c_str() + s.size())
    raise(Errc::parse_error, path + ":" + std::to_string(line_no) + ": not an integer: " + s);
  return v;
}

double parse_double(const std::string& s, const std::string& path, size_t line_no) {
  if (s.empty()) raise(Errc::parse_error, path + ":" + std::to_string(line_no) + ": empty number");
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size())
    raise(Errc::parse_error, path + ":" + std::to_string(line_no) + ": not a number: " + s);
  return v;
}

std::ifstream open_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(Errc::io_error, "cannot open: " + path);
  return in;
}

std::ofstream open_text_write(const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) raise(Errc::io_error, "cannot open for write: " + path);
  return out;
}

}  // namespace

std::string format_score(double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", value);
  return buf;
}

Qrels read_qrels(const std::string& path) {
  auto in = open_text(path);
  Qrels q;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto f = split_fields(line, 3, path, line_no);
    const long grade = parse_long(f[2], path, line_no);
    if (grade < 0)
      raise(Errc::parse_error, path + ":" + std::to_string(line_no) + ": negative grade");
    try {
      q.add(f[0], f[1], static_cast<int>(grade));
    } catch (const Error& e) {
      if (e.code() == Errc::duplicate_entry)
        raise(Errc::duplicate_entry,
              path + ":" + std::to_string(line_no) + ": duplicate pair " + f[0] + "/" + f[1]);
      throw;
    }
  }
  return q;
}

void write_qrels(const std::string& path, const Qrels& qrels) {
  auto out = open_text_write(path);
  for (const auto& [qid, docs] : qrels.by_query)
    for (const auto& [did, grade] : docs) out << qid << '\t' << did << '\t' << grade << '\n';
  out.flush();
  if (!out) raise(Errc::io_error, "write failed: " + path);
}

void write_run(const std::string& path, const std::vector<RankedList>& lists) {
  auto out = open_text_write(path);
  for (const RankedList& l : lists) {
    int rank = 1;
    for (const auto& [did, score] : l.items)
      out << l.query_id << '\t' << did << '\t' << rank++ << '\t' << format_score(score) << '\n';
  }
  out.flush();
  if (!out) raise(Errc::io_error, "write failed: " + path);
}

std::vector<RankedList> read_run(const std::string& path) {
  auto in = open_text(path);
  std::vector<RankedList> lists;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto f = split_fields(line, 4, path, line_no);
    const long rank = parse_long(f[2], path, line_no);
    const double score = parse_double(f[3], path, line_no);
    if (lists.empty() || lists.back().query_id != f[0]) {
      if (rank != 1)
        raise(Errc::parse_error,
              path + ":" + std::to_string(line_no) + ": query block must start at rank 1");
      lists.push_back(RankedList{f[0], {}});
    } else if (rank != static_cast<long>(lists.back().items.size()) + 1) {
      raise(Errc::parse_error, path + ":" + std::to_string(line_no) + ": rank not consecutive");
    }
    lists.back().items.emplace_back(f[1], static_cast<float>(score));
  }
  return lists;
}

std::map<std::string, std::string> read_routing(const std::string& path) {
  auto in = open_text(path);
  std::map<std::string, std::string> routing;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto f = split_fields(line, 2, path, line_no);
    if (!routing.emplace(f[0], f[1]).second)
      raise(Errc::duplicate_entry, path + ":" + std::to_string(line_no) + ": query " + f[0]);
  }
  return routing;
}

void write_query_manifest(const std::string& path, const std::vector<ManifestRow>& rows,
                          const ModalitySet& modalities) {
  auto out = open_text_write(path);
  for (const ManifestRow& r : rows) {
    const std::string target = r.target_modality ? modalities.name(*r.target_modality) : "base";
    out << r.query_id << '\t' << target << '\t' << r.source_doc_id << '\t' << split_name(r.split)
        << '\n';
  }
  out.flush();
  if (!out) raise(Errc::io_error, "write failed: " + path);
}

std::vector<ManifestRow> read_query_manifest(const std::string& path,
                                             const ModalitySet& modalities) {
  auto in = open_text(path);
  std::vector<ManifestRow> rows;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto f = split_fields(line, 4, path, line_no);
    ManifestRow r;
    r.query_id = f[0];
    if (f[1] != "base") {
      auto m = modalities.find(f[1]);
      if (!m)
        raise(Errc::parse_error,
              path + ":" + std::to_string(line_no) + ": unknown modality " + f[1]);
      r.target_modality = *m;
    }
    r.source_doc_id = f[2];
    try {
      r.split = split_from_string(f[3]);
    } catch (const Error&) {
      raise(Errc::parse_error, path + ":" + std::to_string(line_no) + ": unknown split " + f[3]);
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_doc_splits(const std::string& path,
                      const std::vector<std::pair<std::string, Split>>& rows) {
  auto out = open_text_write(path);
  for (const auto& [did, split] : rows) out << did << '\t' << split_name(split) << '\n';
  out.flush();
  if (!out) raise(Errc::io_error, "write failed: " + path);
}

std::vector<std::pair<std::string, Split>> read_doc_splits(const std::string& path) {
  auto in = open_text(path);
  std::vector<std::pair<std::string, Split>> rows;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto f = split_fields(line, 2, path, line_no);
    try {
      rows.emplace_back(f[0], split_from_string(f[1]));
    } catch (const Error&) {
      raise(Errc::parse_error, path + ":" + std::to_string(line_no) + ": unknown split " + f[1]);
    }
  }
  return rows;
}

}  // namespace liret
