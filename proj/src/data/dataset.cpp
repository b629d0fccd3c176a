#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "../common/binary_io.hpp"
#include "skgan/data.hpp"
#include "skgan/errors.hpp"
#include "skgan/hashing.hpp"

namespace skgan::data {

namespace {

std::string mark_id(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "mark-%05zu", i);
  return buf;
}

std::string shortest(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t p = line.find(sep, start);
    out.push_back(line.substr(start, p - start));
    if (p == std::string::npos) return out;
    start = p + 1;
  }
}

constexpr const char* kHeaderTag = "#skgan-manifest";

}  // namespace

std::string dataset_hash(const std::vector<ManifestRecord>& records, const std::vector<Tensor>& images) {
  if (records.size() != images.size()) throw std::invalid_argument("records and images differ in length");
  Sha256 h;
  const std::uint8_t nul = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    h.update(records[i].id);
    h.update(std::span<const std::uint8_t>(&nul, 1));
    h.update(encode_pgm(images[i]));
  }
  return h.hex();
}

DatasetManifest generate_dataset(const GenerateConfig& cfg, const std::filesystem::path& out_dir) {
  if (cfg.count == 0) throw std::invalid_argument("count must be at least 1");
  if (!(cfg.duplicate_fraction >= 0.0 && cfg.duplicate_fraction <= 0.5)) {
    throw std::invalid_argument("duplicate fraction must lie in [0, 0.5]");
  }
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "images", ec);
  if (ec) throw IoError("cannot create " + (out_dir / "images").string() + ": " + ec.message());

  std::mt19937_64 rng(cfg.seed);
  const auto dup_count = static_cast<std::size_t>(std::floor(static_cast<double>(cfg.count) * cfg.duplicate_fraction));
  // Duplicate slots: a Fisher-Yates prefix over 1..count-1, so slot 0 is
  // always an original.
  std::vector<std::size_t> slots(cfg.count - 1);
  for (std::size_t i = 0; i < slots.size(); ++i) slots[i] = i + 1;
  for (std::size_t i = 0; i < dup_count; ++i) {
    const std::size_t j = i + rng() % (slots.size() - i);
    std::swap(slots[i], slots[j]);
  }
  std::vector<bool> is_dup(cfg.count, false);
  for (std::size_t i = 0; i < dup_count; ++i) is_dup[slots[i]] = true;

  DatasetManifest m;
  m.seed = cfg.seed;
  m.duplicate_fraction = cfg.duplicate_fraction;
  std::vector<MarkSpec> specs;
  std::vector<std::size_t> originals;
  std::vector<Tensor> images;
  for (std::size_t i = 0; i < cfg.count; ++i) {
    std::mt19937_64 mark_rng(rng());
    MarkSpec spec;
    if (is_dup[i]) {
      const std::size_t src = originals[mark_rng() % originals.size()];
      spec = jitter_mark(specs[src], mark_rng);
      spec.duplicate_of = mark_id(src);
    } else {
      spec = random_mark(mark_rng);
      originals.push_back(i);
    }
    Tensor img = render_mark(spec);
    ManifestRecord rec{mark_id(i), "images/" + mark_id(i) + ".pgm", mark_to_json(spec)};
    detail::write_file(out_dir / rec.path, encode_pgm(img));
    m.records.push_back(std::move(rec));
    specs.push_back(std::move(spec));
    images.push_back(std::move(img));
  }
  m.hash = dataset_hash(m.records, images);
  write_manifest(m, out_dir / kManifestName);
  return m;
}

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  std::ostringstream os;
  os << kHeaderTag << "\tseed=" << manifest.seed << "\tcount=" << manifest.records.size()
     << "\tduplicate_fraction=" << shortest(manifest.duplicate_fraction) << "\tsha256=" << manifest.hash << "\n";
  for (const ManifestRecord& r : manifest.records) os << r.id << '\t' << r.path << '\t' << r.spec << '\n';
  const std::string text = os.str();
  detail::write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  DatasetManifest m;
  std::string line;
  std::size_t offset = 0;
  if (!std::getline(in, line)) throw ParseError(0, "empty manifest");
  std::vector<std::string> head = split(line, '\t');
  if (head.empty() || head[0] != kHeaderTag) throw ParseError(0, "missing manifest header");
  std::size_t declared = 0;
  for (std::size_t i = 1; i < head.size(); ++i) {
    const std::size_t eq = head[i].find('=');
    if (eq == std::string::npos) throw ParseError(0, "bad header field " + head[i]);
    const std::string key = head[i].substr(0, eq), value = head[i].substr(eq + 1);
    try {
      if (key == "seed") m.seed = std::stoull(value);
      else if (key == "count") declared = std::stoull(value);
      else if (key == "duplicate_fraction") m.duplicate_fraction = std::stod(value);
      else if (key == "sha256") m.hash = value;
    } catch (const std::exception&) {
      throw ParseError(0, "bad header value " + head[i]);
    }
  }
  offset += line.size() + 1;
  std::unordered_map<std::string, bool> seen;
  while (std::getline(in, line)) {
    if (line.empty()) {
      offset += 1;
      continue;
    }
    std::vector<std::string> f = split(line, '\t');
    if (f.size() != 3 || f[0].empty()) throw ParseError(offset, "manifest record needs id, path and spec");
    if (seen[f[0]]) throw ParseError(offset, "duplicate identifier " + f[0]);
    seen[f[0]] = true;
    m.records.push_back({f[0], f[1], f[2]});
    offset += line.size() + 1;
  }
  if (declared != m.records.size()) {
    throw ParseError(offset, "header declares " + std::to_string(declared) + " records, found " +
                                 std::to_string(m.records.size()));
  }
  return m;
}

SampleStore::SampleStore(std::vector<std::string> ids, std::vector<Tensor> images, std::string hash)
    : ids_(std::move(ids)), images_(std::move(images)), hash_(std::move(hash)) {
  if (ids_.size() != images_.size()) throw std::invalid_argument("ids and images differ in length");
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    const Shape4 s = images_[i].shape();
    if (s != Shape4{1, 1, kImageSize, kImageSize}) throw DimensionError("h", ids_[i] + " is not (1,1,64,64)");
    if (!lookup_.emplace(ids_[i], i).second) throw std::invalid_argument("duplicate identifier " + ids_[i]);
  }
}

SampleStore SampleStore::from_manifest(const std::filesystem::path& manifest_path) {
  const DatasetManifest m = read_manifest(manifest_path);
  const std::filesystem::path base = manifest_path.parent_path();
  std::vector<std::string> ids;
  std::vector<Tensor> images;
  for (const ManifestRecord& r : m.records) {
    const std::filesystem::path p = base / r.path;  // operator/ keeps absolute paths as they are
    ids.push_back(r.id);
    images.push_back(load_image(p));
  }
  const std::string hash = dataset_hash(m.records, images);
  if (!m.hash.empty() && hash != m.hash) {
    throw IoError("manifest hash mismatch for " + manifest_path.string() + ": header " + m.hash + ", content " + hash);
  }
  return SampleStore(std::move(ids), std::move(images), hash);
}

std::optional<std::size_t> SampleStore::find(const std::string& id) const {
  auto it = lookup_.find(id);
  if (it == lookup_.end()) return std::nullopt;
  return it->second;
}

Tensor SampleStore::batch(std::span<const std::size_t> indices) const {
  constexpr std::size_t per = kImageSize * kImageSize;
  Tensor out(Shape4{indices.size(), 1, kImageSize, kImageSize});
  auto dst = out.mutable_values();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    auto src = images_.at(indices[i]).values();
    std::copy(src.begin(), src.end(), dst.begin() + i * per);
  }
  return out;
}

}  // namespace skgan::data
