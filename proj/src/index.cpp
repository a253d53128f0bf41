// Copyright the liret authors. Licensed under the terms of the Apache 2.0 license. See LICENSE in the project root.
#include "liret/index.hpp"

#include "liret/io.hpp"
#include "liret/normalize.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

namespace liret {
namespace {

constexpr char kFooterMagic[4] = {'F', 'T', 'A', 'B'};
constexpr double kUnitNormTol = 1e-4;

// Ranking comparator shared by every search path: score descending,
// doc_id ascending on exact ties. Total order, so partial sorts are
// deterministic.
struct RankOrder {
  const std::vector<double>& scores;
  const CorpusIndex& index;
  bool operator()(size_t a, size_t b) const {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return index.doc_id(a) < index.doc_id(b);
  }
};

}  // namespace

CorpusIndex::Builder::Builder(ModalitySet modalities, Eigen::Index dim) {
  if (dim < 1) raise(Errc::invalid_argument, "index dim must be >= 1");
  idx_.mods_ = std::move(modalities);
  idx_.dim_ = dim;
}

void CorpusIndex::Builder::reserve_rows(Eigen::Index rows) {
  idx_.arena_.reserve(static_cast<size_t>(rows) * static_cast<size_t>(idx_.dim_));
}

void CorpusIndex::Builder::add(const Document& doc) {
  if (finished_) raise(Errc::invalid_argument, "builder already finished");
  idx_.add_doc(doc);
}

CorpusIndex CorpusIndex::Builder::finish() {
  if (finished_) raise(Errc::invalid_argument, "builder already finished");
  finished_ = true;
  idx_.finalize();
  return std::move(idx_);
}

void CorpusIndex::add_doc(const Document& doc) {
  if (doc.id.empty()) raise(Errc::invalid_argument, "empty doc_id");
  if (!by_id_.emplace(doc.id, docs_.size()).second)
    raise(Errc::duplicate_entry, "doc_id: " + doc.id);
  if (doc.modalities.size() != mods_.size())
    raise(Errc::invalid_argument, "doc " + doc.id + ": modality slots do not match the set");

  DocMeta meta;
  meta.id = doc.id;
  meta.first_row = arena_.size() / static_cast<size_t>(dim_);
  uint64_t row = meta.first_row;
  for (size_t m = 0; m < mods_.size(); ++m) {
    if (!doc.modalities[m]) continue;
    const TokenMatrixF& rows = *doc.modalities[m];
    if (rows.cols() != dim_)
      raise(Errc::dim_mismatch, "doc " + doc.id + "/" + mods_.name(m) + ": dim " +
                                    std::to_string(rows.cols()) + ", index dim " +
                                    std::to_string(dim_));
    if (rows.rows() < 1)
      raise(Errc::invalid_argument, "doc " + doc.id + ": present modality with zero rows");
    for (Eigen::Index r = 0; r < rows.rows(); ++r) {
      // Zero rows are legal: the encoder maps zero-norm projections to the
      // zero embedding, which scores 0 against everything.
      const double n = rows.row(r).template cast<double>().norm();
      if (n != 0.0 && std::abs(n - 1.0) > kUnitNormTol)
        raise(Errc::invalid_argument, "doc " + doc.id + "/" + mods_.name(m) + " row " +
                                          std::to_string(r) + ": norm " + std::to_string(n) +
                                          "; index rows must be unit-normalized or zero");
    }
    meta.bitmap |= static_cast<uint8_t>(1u << m);
    meta.spans[m] = Span{row, static_cast<uint32_t>(rows.rows())};
    arena_.insert(arena_.end(), rows.data(), rows.data() + rows.size());
    row += static_cast<uint64_t>(rows.rows());
  }
  meta.total_rows = static_cast<uint32_t>(row - meta.first_row);
  if (meta.total_rows == 0) raise(Errc::invalid_argument, "doc " + doc.id + ": no tokens");
  docs_.push_back(std::move(meta));
}

void CorpusIndex::finalize() {
  if (docs_.empty()) raise(Errc::invalid_argument, "cannot build an empty index");
  pooled_mean_.resize(static_cast<Eigen::Index>(docs_.size()), dim_);
  pooled_last_.resize(static_cast<Eigen::Index>(docs_.size()), dim_);
  for (size_t i = 0; i < docs_.size(); ++i) {
    const MatViewF rows = doc_rows(i);
    Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(dim_);
    for (Eigen::Index r = 0; r < rows.rows(); ++r) sum += rows.row(r).cast<double>();
    pooled_mean_.row(static_cast<Eigen::Index>(i)) =
        normalized_or_zero(sum / static_cast<double>(rows.rows())).cast<float>();
    pooled_last_.row(static_cast<Eigen::Index>(i)) =
        normalized_or_zero(rows.row(rows.rows() - 1)).cast<float>();
  }
}

CorpusIndex CorpusIndex::build(const ModalitySet& modalities, Eigen::Index dim,
                               std::vector<Document>&& docs) {
  Builder b(modalities, dim);
  Eigen::Index total = 0;
  for (const Document& d : docs) total += d.total_tokens();
  b.reserve_rows(total);
  for (Document& d : docs) {
    b.add(d);
    d.modalities.clear();  // free as we go; peak stays near one arena
  }
  docs.clear();
  return b.finish();
}

std::optional<size_t> CorpusIndex::find(const std::string& doc_id) const {
  auto it = by_id_.find(doc_id);
  if (it == by_id_.end()) return std::nullopt;
  return it->second;
}

Eigen::Index CorpusIndex::total_rows() const {
  return static_cast<Eigen::Index>(arena_.size() / static_cast<size_t>(dim_));
}

MatViewF CorpusIndex::rows_view(uint64_t first, uint32_t count) const {
  return Eigen::Map<const TokenMatrixF>(arena_.data() + first * static_cast<uint64_t>(dim_),
                                        static_cast<Eigen::Index>(count), dim_);
}

bool CorpusIndex::has_modality(size_t doc, size_t modality) const {
  return (docs_.at(doc).bitmap >> modality) & 1u;
}

MatViewF CorpusIndex::modality_rows(size_t doc, size_t modality) const {
  const DocMeta& d = docs_.at(doc);
  if (!((d.bitmap >> modality) & 1u))
    raise(Errc::not_found, "doc " + d.id + " lacks modality " + mods_.name(modality));
  return rows_view(d.spans[modality].first_row, d.spans[modality].rows);
}

MatViewF CorpusIndex::doc_rows(size_t doc) const {
  const DocMeta& d = docs_.at(doc);
  return rows_view(d.first_row, d.total_rows);
}

DocTokenView<float> CorpusIndex::doc(size_t i) const {
  DocTokenView<float> v;
  const DocMeta& d = docs_.at(i);
  for (size_t m = 0; m < mods_.size(); ++m)
    if ((d.bitmap >> m) & 1u) v.emplace_back(m, rows_view(d.spans[m].first_row, d.spans[m].rows));
  return v;
}

double CorpusIndex::score_doc(const TokenMatrixF& query, size_t i, Scorer scorer) const {
  switch (scorer) {
    case Scorer::li_mw:
      return li_mw<float>(query, doc(i), mods_.size()).total;
    case Scorer::li_context:
      // Modalities are contiguous in declared order, so the concatenated
      // max is one span over the whole document.
      return li_modality<float>(query, doc_rows(i));
    case Scorer::pooled_mean:
    case Scorer::pooled_last: {
      const TokenMatrixF& pooled = scorer == Scorer::pooled_mean ? pooled_mean_ : pooled_last_;
      Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(dim_);
      if (scorer == Scorer::pooled_mean) {
        for (Eigen::Index r = 0; r < query.rows(); ++r) sum += query.row(r).cast<double>();
        sum /= static_cast<double>(query.rows());
      } else {
        sum = query.row(query.rows() - 1).cast<double>();
      }
      const Eigen::RowVectorXd q = normalized_or_zero(sum);
      return q.dot(pooled.row(static_cast<Eigen::Index>(i)).cast<double>());
    }
  }
  raise(Errc::invalid_argument, "unknown scorer");
}

ScoreBreakdown CorpusIndex::score_doc_breakdown(const TokenMatrixF& query, size_t i) const {
  return li_mw<float>(query, doc(i), mods_.size());
}

namespace {

RankedList rank_candidates(const CorpusIndex& index, const std::vector<double>& scores,
                           std::vector<size_t> order, int k, const std::string& query_id) {
  const RankOrder cmp{scores, index};
  const size_t keep = std::min<size_t>(static_cast<size_t>(k), order.size());
  if (keep < order.size())
    std::partial_sort(order.begin(), order.begin() + static_cast<ptrdiff_t>(keep), order.end(),
                      cmp);
  else
    std::sort(order.begin(), order.end(), cmp);
  RankedList out;
  out.query_id = query_id;
  out.items.reserve(keep);
  for (size_t r = 0; r < keep; ++r)
    out.items.emplace_back(index.doc_id(order[r]), static_cast<float>(scores[order[r]]));
  return out;
}

void check_query(const TokenMatrixF& query, Eigen::Index dim) {
  if (query.rows() < 1) raise(Errc::invalid_argument, "query has no tokens");
  if (query.cols() != dim)
    raise(Errc::dim_mismatch,
          "query dim " + std::to_string(query.cols()) + ", index dim " + std::to_string(dim));
}

}  // namespace

RankedList CorpusIndex::search(const TokenMatrixF& query, int k, Scorer scorer,
                               const std::string& query_id) const {
  check_query(query, dim_);
  if (k < 1) raise(Errc::invalid_argument, "k must be >= 1");
  std::vector<double> scores(docs_.size());
  for (size_t i = 0; i < docs_.size(); ++i) scores[i] = score_doc(query, i, scorer);
  std::vector<size_t> order(docs_.size());
  std::iota(order.begin(), order.end(), size_t{0});
  return rank_candidates(*this, scores, std::move(order), k, query_id);
}

RankedList CorpusIndex::search_prefiltered(const TokenMatrixF& query, int k, int candidates,
                                           Scorer scorer, const std::string& query_id) const {
  check_query(query, dim_);
  if (k < 1) raise(Errc::invalid_argument, "k must be >= 1");
  if (candidates < k)
    raise(Errc::invalid_argument, "candidate count " + std::to_string(candidates) +
                                      " smaller than k " + std::to_string(k));
  const size_t c = std::min<size_t>(static_cast<size_t>(candidates), docs_.size());

  std::vector<double> coarse(docs_.size());
  for (size_t i = 0; i < docs_.size(); ++i) coarse[i] = score_doc(query, i, Scorer::pooled_mean);
  std::vector<size_t> order(docs_.size());
  std::iota(order.begin(), order.end(), size_t{0});
  const RankOrder cmp{coarse, *this};
  if (c < order.size())
    std::partial_sort(order.begin(), order.begin() + static_cast<ptrdiff_t>(c), order.end(), cmp);
  else
    std::sort(order.begin(), order.end(), cmp);
  order.resize(c);

  std::vector<double> exact(docs_.size(), kNegInf);
  for (size_t i : order) exact[i] = score_doc(query, i, scorer);
  return rank_candidates(*this, exact, std::move(order), k, query_id);
}

Eigen::MatrixXd CorpusIndex::modality_score_table(const TokenMatrixF& query, bool pooled) const {
  check_query(query, dim_);
  Eigen::MatrixXd table(static_cast<Eigen::Index>(docs_.size()),
                        static_cast<Eigen::Index>(mods_.size()));
  table.setConstant(std::numeric_limits<double>::quiet_NaN());
  Eigen::RowVectorXd q_pooled;
  if (pooled) {
    Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(dim_);
    for (Eigen::Index r = 0; r < query.rows(); ++r) sum += query.row(r).cast<double>();
    q_pooled = normalized_or_zero(sum / static_cast<double>(query.rows()));
  }
  for (size_t i = 0; i < docs_.size(); ++i) {
    for (size_t m = 0; m < mods_.size(); ++m) {
      if (!has_modality(i, m)) continue;
      const MatViewF rows = modality_rows(i, m);
      if (pooled) {
        Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(dim_);
        for (Eigen::Index r = 0; r < rows.rows(); ++r) sum += rows.row(r).cast<double>();
        const Eigen::RowVectorXd d = normalized_or_zero(sum / static_cast<double>(rows.rows()));
        table(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(m)) = q_pooled.dot(d);
      } else {
        table(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(m)) =
            li_modality<float>(query, rows);
      }
    }
  }
  return table;
}

void CorpusIndex::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) raise(Errc::io_error, "cannot open for write: " + path);
  Container c;
  c.kind = PayloadKind::embeddings;
  c.modalities = mods_;
  c.dim = dim_;
  c.docs.reserve(docs_.size());
  for (size_t i = 0; i < docs_.size(); ++i) {
    Document d(docs_[i].id, mods_.size());
    for (size_t m = 0; m < mods_.size(); ++m)
      if (has_modality(i, m)) d.modalities[m] = TokenMatrixF(modality_rows(i, m));
    c.docs.push_back(std::move(d));
  }
  write_container(out, c);
  out.write(kFooterMagic, 4);
  uint64_t n = docs_.size();
  out.write(reinterpret_cast<const char*>(&n), sizeof n);
  for (const DocMeta& d : docs_) {
    const uint16_t len = static_cast<uint16_t>(d.id.size());
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(d.id.data(), len);
  }
  out.flush();
  if (!out) raise(Errc::io_error, "write failed: " + path);
}

CorpusIndex CorpusIndex::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(Errc::io_error, "cannot open: " + path);
  Container c = read_container(in, path);
  if (c.kind != PayloadKind::embeddings)
    raise(Errc::bad_magic, path + ": index payload must be embeddings");

  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kFooterMagic, 4) != 0)
    raise(Errc::truncated, path + ": missing doc-id table footer");
  uint64_t n = 0;
  in.read(reinterpret_cast<char*>(&n), sizeof n);
  if (in.gcount() != sizeof n || n != c.docs.size())
    raise(Errc::parse_error, path + ": footer doc count mismatch");
  for (uint64_t i = 0; i < n; ++i) {
    uint16_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof len);
    std::string id(len, '\0');
    in.read(id.data(), len);
    if (!in) raise(Errc::truncated, path + ": footer cut short");
    if (id != c.docs[i].id)
      raise(Errc::parse_error, path + ": footer id " + id + " != payload id " + c.docs[i].id);
  }

  Builder b(c.modalities, c.dim);
  Eigen::Index total = 0;
  for (const Document& d : c.docs) total += d.total_tokens();
  b.reserve_rows(total);
  for (Document& d : c.docs) {
    b.add(d);
    d.modalities.clear();
  }
  return b.finish();
}

}  // namespace liret
