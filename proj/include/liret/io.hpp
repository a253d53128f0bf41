// Copyright the liret authors. Licensed under the terms of the Apache 2.0 license. See LICENSE in the project root.
#pragma once

#include "liret/types.hpp"

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace liret {

// Binary token container, little-endian throughout:
//
//   magic        4 bytes   "CLMR" embeddings payload, "CLMF" raw features
//   version      u32       currently 1
//   dim          u32       columns of every token matrix
//   n_modalities u8        1..8, declared order
//   per modality           u16 name length + UTF-8 bytes
//   n_docs       u64
//   per doc                u16 id length + bytes,
//                          u8 presence bitmap (bit i = declared modality i),
//                          per present modality in declared order:
//                            u32 row count, then rows*dim float32
//
// The payload kind is flagged by the magic so an embeddings reader fails
// loudly on a raw-feature file instead of serving garbage.
enum class PayloadKind : uint8_t { embeddings, features };

struct Container {
  PayloadKind kind = PayloadKind::embeddings;
  ModalitySet modalities;
  Eigen::Index dim = 0;
  std::vector<Document> docs;
};

void write_container(std::ostream& out, const Container& c);
void write_container(const std::string& path, const Container& c);

// Reads one container from the stream and leaves the stream positioned
// right after it (index files append a footer there).
Container read_container(std::istream& in, const std::string& origin);

// Strict file readers: trailing bytes after the payload are an error.
Container read_container(const std::string& path);
Container read_embeddings(const std::string& path);
Container read_features(const std::string& path);

// Qrels TSV: query_id <TAB> doc_id <TAB> grade. Grades are non-negative
// integers; duplicate (query, doc) pairs and malformed lines are errors
// reported with their 1-based line number.
Qrels read_qrels(const std::string& path);
void write_qrels(const std::string& path, const Qrels& qrels);

// Run TSV: query_id <TAB> doc_id <TAB> rank <TAB> score. Ranks start at 1
// and must be consecutive within a query block.
void write_run(const std::string& path, const std::vector<RankedList>& lists);
std::vector<RankedList> read_run(const std::string& path);

// Routing TSV: query_id <TAB> modality_name.
std::map<std::string, std::string> read_routing(const std::string& path);

// Query manifest TSV: query_id <TAB> target <TAB> source_doc_id <TAB> split,
// where target is a modality name or "base" for whole-document queries.
struct ManifestRow {
  std::string query_id;
  std::optional<size_t> target_modality;
  std::string source_doc_id;
  Split split = Split::train;
};

void write_query_manifest(const std::string& path, const std::vector<ManifestRow>& rows,
                          const ModalitySet& modalities);
std::vector<ManifestRow> read_query_manifest(const std::string& path,
                                             const ModalitySet& modalities);

// Document split TSV: doc_id <TAB> split.
void write_doc_splits(const std::string& path,
                      const std::vector<std::pair<std::string, Split>>& rows);
std::vector<std::pair<std::string, Split>> read_doc_splits(const std::string& path);

// Score formatting shared by every text emitter so files are reproducible.
std::string format_score(double value);

}  // namespace liret
