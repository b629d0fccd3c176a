#include <algorithm>
#include <cstdio>
#include <numeric>
#include <ostream>

#include "../common/binary_io.hpp"
#include "skgan/errors.hpp"
#include "skgan/retrieval.hpp"

namespace skgan::retrieval {

EmbeddingIndex::EmbeddingIndex(std::string encoder_id, std::string dataset_hash, std::size_t dim)
    : encoder_id_(std::move(encoder_id)), dataset_hash_(std::move(dataset_hash)), dim_(dim) {}

std::optional<std::size_t> EmbeddingIndex::find(const std::string& id) const {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].id == id) return i;
  }
  return std::nullopt;
}

void EmbeddingIndex::add(Embedding e) {
  if (e.values.size() != dim_) {
    throw DimensionError("dim", "embedding " + e.id + " has length " + std::to_string(e.values.size()) +
                                    ", index holds " + std::to_string(dim_));
  }
  if (find(e.id)) throw std::invalid_argument("duplicate identifier " + e.id);
  entries_.push_back(std::move(e));
}

std::vector<Hit> EmbeddingIndex::top_k(const Embedding& query, std::size_t k) const {
  if (entries_.empty()) throw std::invalid_argument("top_k on an empty index");
  if (k < 1 || k > entries_.size()) {
    throw std::invalid_argument("k = " + std::to_string(k) + " outside [1, " + std::to_string(entries_.size()) + "]");
  }
  std::vector<double> sims(entries_.size());
  for (std::size_t i = 0; i < entries_.size(); ++i) sims[i] = similarity(query, entries_[i]);
  std::vector<std::size_t> order(entries_.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto before = [&](std::size_t a, std::size_t b) {
    if (sims[a] != sims[b]) return sims[a] > sims[b];
    return entries_[a].id < entries_[b].id;
  };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), before);
  std::vector<Hit> hits;
  hits.reserve(k);
  for (std::size_t i = 0; i < k; ++i) hits.push_back({entries_[order[i]].id, sims[order[i]]});
  return hits;
}

std::vector<std::uint8_t> EmbeddingIndex::serialize() const {
  detail::ByteWriter w;
  w.raw("SKIDX1");
  w.str32(encoder_id_);
  w.str32(dataset_hash_);
  w.le(static_cast<std::uint64_t>(entries_.size()));
  w.le(static_cast<std::uint64_t>(dim_));
  for (const Embedding& e : entries_) {
    w.str32(e.id);
    w.le(static_cast<std::uint8_t>(e.degenerate ? 1 : 0));
    for (double v : e.values) w.f64(v);
  }
  return std::move(w.bytes());
}

EmbeddingIndex EmbeddingIndex::deserialize(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  r.expect("SKIDX1");
  std::string enc = r.str32("encoder id");
  std::string data = r.str32("dataset hash");
  const auto count = r.le<std::uint64_t>("record count");
  const auto dim = r.le<std::uint64_t>("dimension");
  EmbeddingIndex index(std::move(enc), std::move(data), dim);
  for (std::uint64_t i = 0; i < count; ++i) {
    Embedding e;
    const std::size_t at = r.offset();
    e.id = r.str32("identifier");
    const auto flag = r.le<std::uint8_t>("degenerate flag");
    if (flag > 1) throw ParseError(r.offset() - 1, "degenerate flag must be 0 or 1");
    e.degenerate = flag == 1;
    r.need(dim * 8, "embedding values");
    e.values.resize(dim);
    for (double& v : e.values) v = r.f64("embedding value");
    if (index.find(e.id)) throw ParseError(at, "duplicate identifier " + e.id);
    index.entries_.push_back(std::move(e));
  }
  if (!r.at_end()) throw ParseError(r.offset(), "trailing bytes after index records");
  return index;
}

void EmbeddingIndex::save(const std::filesystem::path& path) const { detail::write_file(path, serialize()); }

EmbeddingIndex EmbeddingIndex::load(const std::filesystem::path& path) {
  return deserialize(detail::read_file(path));
}

EmbeddingIndex build_index(const Encoder& enc, const data::SampleStore& store, std::size_t batch) {
  if (batch < 1) throw std::invalid_argument("index batch must be at least 1");
  EmbeddingIndex index(enc.id(), store.hash(), enc.dim());
  std::vector<std::size_t> picks;
  for (std::size_t start = 0; start < store.size(); start += batch) {
    const std::size_t end = std::min(store.size(), start + batch);
    picks.resize(end - start);
    std::iota(picks.begin(), picks.end(), start);
    std::vector<std::string> ids(store.ids().begin() + static_cast<std::ptrdiff_t>(start),
                                 store.ids().begin() + static_cast<std::ptrdiff_t>(end));
    for (Embedding& e : enc.encode_batch(store.batch(picks), ids)) index.add(std::move(e));
  }
  return index;
}

void write_hits_csv(std::ostream& out, std::span<const Hit> hits) {
  out << "rank,identifier,similarity\n";
  char buf[64];
  for (std::size_t i = 0; i < hits.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", hits[i].similarity);
    out << (i + 1) << ',' << hits[i].id << ',' << buf << '\n';
  }
}

}  // namespace skgan::retrieval
