#include "commands.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <memory>
#include <optional>
#include <ostream>

#include "raster.hpp"
#include "skgan/data.hpp"
#include "skgan/errors.hpp"
#include "skgan/hashing.hpp"
#include "skgan/invariance.hpp"
#include "skgan/network.hpp"
#include "skgan/retrieval.hpp"
#include "skgan/trainer.hpp"

namespace fs = std::filesystem;

namespace skgan::cli {

namespace {

std::ofstream open_out(const fs::path& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  return f;
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Encoder source shared by encode, query and bench.
struct EncoderFlags {
  std::string checkpoint;
  bool pixels = false;

  void add(CLI::App* cmd) {
    auto* c = cmd->add_option("--checkpoint", checkpoint, "Discriminator checkpoint used as the encoder")
                  ->check(CLI::ExistingFile);
    cmd->add_flag("--pixels", pixels, "Use raw pixels instead of a discriminator (default: off)")->excludes(c);
  }

  std::unique_ptr<retrieval::Encoder> load() const {
    if (pixels) return std::make_unique<retrieval::PixelEncoder>();
    if (checkpoint.empty()) throw UsageError("one of --checkpoint or --pixels is required");
    return std::make_unique<retrieval::DiscriminatorEncoder>(retrieval::make_encoder(nn::load_checkpoint(checkpoint)));
  }
};

// ---- gen-data --------------------------------------------------------------

struct GenDataFlags {
  std::string out;
  data::GenerateConfig cfg;
};

void add_gen_data(CLI::App& app, GenDataFlags& f) {
  auto* cmd = app.add_subcommand("gen-data", "Render a synthetic mark dataset with a manifest");
  cmd->add_option("--out", f.out, "Output directory")->required();
  cmd->add_option("--count", f.cfg.count, "Number of marks")->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("--duplicate-fraction", f.cfg.duplicate_fraction, "Fraction of planted near-duplicates")
      ->capture_default_str()
      ->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--seed", f.cfg.seed, "Generator seed")->capture_default_str();
}

int cmd_gen_data(const GenDataFlags& f, std::ostream& out) {
  const data::DatasetManifest m = data::generate_dataset(f.cfg, f.out);
  out << "manifest=" << (fs::path(f.out) / data::kManifestName).string() << "\n";
  out << "count=" << m.records.size() << "\n";
  out << "sha256=" << m.hash << "\n";
  return kExitOk;
}

// ---- train -----------------------------------------------------------------

struct TrainFlags {
  std::string config;
  std::string arch = "sketch";
  std::string data;
  std::string out;
  train::TrainConfig cfg;
  std::optional<std::uint64_t> init_seed;
  std::size_t log_every = 100;
};

void add_train(CLI::App& app, TrainFlags& f) {
  auto* cmd = app.add_subcommand("train", "Train a generator and discriminator pair");
  // Flags from --config come first, so a flag repeated on the command line wins.
  cmd->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  cmd->add_option("--config", f.config, "key=value file; keys are any of these flag names")
      ->check(CLI::ExistingFile);
  cmd->add_option("--arch", f.arch, "Architecture")->capture_default_str()->check(CLI::IsMember({"sketch", "thin"}));
  cmd->add_option("--data", f.data, "Dataset manifest")->required()->check(CLI::ExistingFile);
  cmd->add_option("--out", f.out, "Output directory")->required();
  auto& c = f.cfg;
  cmd->add_option("--iterations", c.iterations, "Outer iterations")->capture_default_str();
  cmd->add_option("--batch", c.batch, "Minibatch size m")->capture_default_str();
  cmd->add_option("--k", c.k, "Discriminator updates per iteration")->capture_default_str();
  cmd->add_option("--latent-dim", c.latent_dim, "Latent width dz")->capture_default_str();
  cmd->add_option("--lr", c.learning_rate, "Adam learning rate")->capture_default_str();
  cmd->add_option("--beta1", c.beta1, "Adam beta1")->capture_default_str();
  cmd->add_option("--beta2", c.beta2, "Adam beta2")->capture_default_str();
  cmd->add_option("--adam-eps", c.adam_eps, "Adam epsilon")->capture_default_str();
  cmd->add_option("--loss-clamp", c.loss_clamp, "Clamp on D outputs inside the logs")->capture_default_str();
  cmd->add_flag("--minimax-generator", c.minimax_generator,
                "Generator minimises log(1 - D(G(z))) (default: off, uses -log D(G(z)))");
  cmd->add_option("--checkpoint-interval", c.checkpoint_interval, "Iterations between checkpoints, 0 = final only")
      ->capture_default_str();
  cmd->add_option("--seed", c.seed, "Seed for batches and latents")->capture_default_str();
  cmd->add_option("--init-seed", f.init_seed,
                  "Weight initialisation seed; G uses it, D uses it + 1 (default: --seed)");
  cmd->add_option("--log-every", f.log_every, "Progress line interval on stderr, 0 = silent")->capture_default_str();
}

// "key=value" lines become "--key value"; "key=true" becomes "--key" and
// "key=false" is dropped. Blank lines, '#' comments and [section] headers are
// skipped.
std::vector<std::string> config_args(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config " + path.string());
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r"), e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  std::vector<std::string> args;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    line = trim(line);
    if (line.empty() || line[0] == '#' || line[0] == '[') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw UsageError(path.string() + ":" + std::to_string(n) + ": expected key=value");
    std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    if (key == "config") throw UsageError(path.string() + ": config files cannot nest");
    if (value == "false") continue;
    args.push_back("--" + key);
    if (value != "true") args.push_back(value);
  }
  return args;
}

// Splices the contents of `train --config FILE` in front of the other flags.
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  if (args.empty() || args[0] != "train") return args;
  for (std::size_t i = 1; i < args.size(); ++i) {
    std::string path;
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
    if (path.empty() || !fs::is_regular_file(path)) continue;
    std::vector<std::string> out{args[0]};
    for (std::string& a : config_args(path)) out.push_back(std::move(a));
    out.insert(out.end(), args.begin() + 1, args.end());
    return out;
  }
  return args;
}

Canvas loss_plot(const std::vector<train::LossRecord>& h) {
  Series d{"J_D", {}, {}}, g{"J_G", {}, {}};
  for (const auto& r : h) {
    d.x.push_back(static_cast<double>(r.iteration));
    d.y.push_back(r.j_d);
    g.x.push_back(static_cast<double>(r.iteration));
    g.y.push_back(r.j_g);
  }
  return line_plot({d, g});
}

int cmd_train(const TrainFlags& f, std::ostream& out, std::ostream& err) {
  try {
    f.cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const data::SampleStore store = data::SampleStore::from_manifest(f.data);
  const fs::path dir = f.out;
  make_dir(dir);
  const std::uint64_t init = f.init_seed.value_or(f.cfg.seed);
  nn::Model g = nn::build_model(nn::spec_by_name(f.arch + "-G", f.cfg.latent_dim), init);
  nn::Model d = nn::build_model(nn::spec_by_name(f.arch + "-D"), init + 1);

  std::ofstream csv = open_out(dir / "loss.csv");
  csv << train::loss_csv_header() << "\n";
  std::vector<train::LossRecord> history;
  train::TrainSink sink;
  sink.on_record = [&](const train::LossRecord& r) {
    csv << train::loss_csv_row(r) << "\n";
    history.push_back(r);
    if (f.log_every > 0 && (r.iteration % f.log_every == 0 || r.iteration == f.cfg.iterations)) {
      err << "iter " << r.iteration << "/" << f.cfg.iterations << " J_D=" << r.j_d << " J_G=" << r.j_g << "\n";
    }
  };
  sink.on_checkpoint = [&](train::CheckpointKind kind, std::size_t it, const nn::Model& gm, const nn::Model& dm) {
    switch (kind) {
      case train::CheckpointKind::kFinal:
        nn::save_checkpoint(gm, dir / "generator.ckpt");
        nn::save_checkpoint(dm, dir / "discriminator.ckpt");
        break;
      case train::CheckpointKind::kPeriodic: {
        make_dir(dir / "checkpoints");
        char name[64];
        std::snprintf(name, sizeof name, "_%06zu.ckpt", it);
        nn::save_checkpoint(gm, dir / "checkpoints" / (std::string("generator") + name));
        nn::save_checkpoint(dm, dir / "checkpoints" / (std::string("discriminator") + name));
        break;
      }
      case train::CheckpointKind::kDiagnostic:
        nn::save_checkpoint(gm, dir / "diagnostic_generator.ckpt");
        nn::save_checkpoint(dm, dir / "diagnostic_discriminator.ckpt");
        break;
    }
  };

  try {
    train::train(store, g, d, f.cfg, sink);
  } catch (const train::NonFiniteLoss& e) {
    csv.close();
    if (!history.empty()) loss_plot(history).save_png(dir / "loss.png");
    err << "error: " << e.what() << "; diagnostic checkpoints in " << dir.string() << "\n";
    return kExitFailure;
  }
  csv.close();
  if (!history.empty()) loss_plot(history).save_png(dir / "loss.png");
  out << "generator=" << (dir / "generator.ckpt").string() << "\n";
  out << "discriminator=" << (dir / "discriminator.ckpt").string() << "\n";
  out << "loss_csv=" << (dir / "loss.csv").string() << "\n";
  out << "iterations=" << history.size() << "\n";
  return kExitOk;
}

// ---- encode ----------------------------------------------------------------

struct EncodeFlags {
  EncoderFlags enc;
  std::string data;
  std::string out;
  std::size_t batch = 64;
  std::uint64_t seed = 0;
};

void add_encode(CLI::App& app, EncodeFlags& f) {
  auto* cmd = app.add_subcommand("encode", "Embed every sample of a dataset into an index file");
  f.enc.add(cmd);
  cmd->add_option("--data", f.data, "Dataset manifest")->required()->check(CLI::ExistingFile);
  cmd->add_option("--out", f.out, "Index file to write")->required();
  cmd->add_option("--batch", f.batch, "Encoding batch size")->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("--seed", f.seed, "Unused; encoding is deterministic")->capture_default_str();
}

int cmd_encode(const EncodeFlags& f, std::ostream& out) {
  const auto enc = f.enc.load();
  const data::SampleStore store = data::SampleStore::from_manifest(f.data);
  const retrieval::EmbeddingIndex index = retrieval::build_index(*enc, store, f.batch);
  index.save(f.out);
  std::size_t degenerate = 0;
  for (const auto& e : index.entries()) degenerate += e.degenerate ? 1 : 0;
  out << "index=" << f.out << "\n";
  out << "count=" << index.size() << "\n";
  out << "dim=" << index.dim() << "\n";
  out << "degenerate=" << degenerate << "\n";
  out << "encoder_id=" << index.encoder_id() << "\n";
  return kExitOk;
}

// ---- query -----------------------------------------------------------------

struct QueryFlags {
  EncoderFlags enc;
  std::string index;
  std::string data;
  std::string id;
  std::string image;
  std::string batch;
  std::size_t k = 9;
  std::string out;
  std::uint64_t seed = 0;
};

void add_query(CLI::App& app, QueryFlags& f) {
  auto* cmd = app.add_subcommand("query", "Rank indexed samples by similarity to a query");
  f.enc.add(cmd);
  cmd->add_option("--index", f.index, "Index file from encode")->required()->check(CLI::ExistingFile);
  cmd->add_option("--data", f.data, "Dataset manifest the index was built from")
      ->required()
      ->check(CLI::ExistingFile);
  auto* id = cmd->add_option("--id", f.id, "Query by indexed identifier");
  auto* img = cmd->add_option("--image", f.image, "Query by a 64x64 PGM or PNG file")->check(CLI::ExistingFile);
  auto* batch = cmd->add_option("--batch", f.batch, "File listing one query identifier per line")
                    ->check(CLI::ExistingFile);
  id->excludes(img)->excludes(batch);
  img->excludes(batch);
  cmd->add_option("--k", f.k, "Results per query")->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("--out", f.out, "Output directory")->required();
  cmd->add_option("--seed", f.seed, "Unused; ranking is deterministic")->capture_default_str();
}

std::vector<std::string> read_id_list(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t')) line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    ids.push_back(line);
  }
  if (ids.empty()) throw UsageError(path.string() + " lists no identifiers");
  return ids;
}

int cmd_query(const QueryFlags& f, std::ostream& out) {
  if (f.id.empty() && f.image.empty() && f.batch.empty()) throw UsageError("one of --id, --image or --batch is required");
  const auto enc = f.enc.load();
  const retrieval::EmbeddingIndex index = retrieval::EmbeddingIndex::load(f.index);
  if (index.encoder_id() != enc->id()) {
    throw std::runtime_error("index " + f.index + " was built by encoder " + index.encoder_id() +
                             ", but the given encoder is " + enc->id() + "; rebuild the index with encode");
  }
  const data::SampleStore store = data::SampleStore::from_manifest(f.data);
  if (index.dataset_hash() != store.hash()) {
    throw std::runtime_error("index dataset hash " + index.dataset_hash() + " differs from manifest hash " +
                             store.hash());
  }
  if (f.k > index.size()) {
    throw UsageError("--k " + std::to_string(f.k) + " exceeds index size " + std::to_string(index.size()));
  }

  auto image_of = [&](const std::string& id) {
    const auto i = store.find(id);
    if (!i) throw UsageError("identifier " + id + " is not in the dataset");
    return store.image(*i);
  };
  auto embedding_of = [&](const std::string& id) {
    const auto i = index.find(id);
    if (!i) throw UsageError("identifier " + id + " is not in the index");
    return index.entries()[*i];
  };

  const fs::path dir = f.out;
  make_dir(dir);
  std::vector<std::vector<Tensor>> rows;
  if (f.batch.empty()) {
    Tensor q;
    retrieval::Embedding e;
    if (!f.id.empty()) {
      q = image_of(f.id);
      e = embedding_of(f.id);
    } else {
      q = data::load_image(f.image);
      e = enc->encode(q, "query");
    }
    const std::vector<retrieval::Hit> hits = index.top_k(e, f.k);
    std::ofstream csv = open_out(dir / "query.csv");
    retrieval::write_hits_csv(csv, hits);
    rows.push_back({q});
    for (const auto& h : hits) rows.back().push_back(image_of(h.id));
  } else {
    std::ofstream csv = open_out(dir / "queries.csv");
    csv << "query,rank,identifier,similarity\n";
    for (const std::string& qid : read_id_list(f.batch)) {
      const std::vector<retrieval::Hit> hits = index.top_k(embedding_of(qid), f.k);
      rows.push_back({image_of(qid)});
      for (std::size_t r = 0; r < hits.size(); ++r) {
        csv << qid << ',' << (r + 1) << ',' << hits[r].id << ',' << fmt(hits[r].similarity) << '\n';
        rows.back().push_back(image_of(hits[r].id));
      }
    }
  }
  montage(rows).save_png(dir / "montage.png");
  out << "results=" << (dir / (f.batch.empty() ? "query.csv" : "queries.csv")).string() << "\n";
  out << "montage=" << (dir / "montage.png").string() << "\n";
  return kExitOk;
}

// ---- bench -----------------------------------------------------------------

struct BenchFlags {
  std::vector<std::string> checkpoints;
  std::vector<std::string> names;
  bool pixels = false;
  std::string data;
  std::vector<std::string> sweeps{"rotation", "scale", "shift"};
  std::size_t probes = 100;
  std::uint64_t seed = 0;
  std::string out;
};

void add_bench(CLI::App& app, BenchFlags& f) {
  auto* cmd = app.add_subcommand("bench", "Rotation, scale and shift invariance sweeps");
  cmd->add_option("--checkpoint", f.checkpoints, "Discriminator checkpoint (repeatable)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--name", f.names, "Label per checkpoint, in order (default: architecture name)");
  cmd->add_flag("--pixels", f.pixels, "Also run the raw-pixel encoder, labelled \"pixels\" (default: off)");
  cmd->add_option("--data", f.data, "Dataset manifest")->required()->check(CLI::ExistingFile);
  cmd->add_option("--sweeps", f.sweeps, "Sweeps to run")
      ->delimiter(',')
      ->capture_default_str()
      ->check(CLI::IsMember({"rotation", "scale", "shift"}));
  cmd->add_option("--probes", f.probes, "Probe samples per sweep")->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("--seed", f.seed, "Probe selection seed")->capture_default_str();
  cmd->add_option("--out", f.out, "Output directory")->required();
}

int cmd_bench(const BenchFlags& f, std::ostream& out) {
  if (f.checkpoints.empty() && !f.pixels) throw UsageError("give at least one --checkpoint or --pixels");
  if (!f.names.empty() && f.names.size() != f.checkpoints.size()) {
    throw UsageError("--name must be given once per --checkpoint");
  }
  const data::SampleStore store = data::SampleStore::from_manifest(f.data);
  if (store.size() < f.probes) {
    throw UsageError("dataset has " + std::to_string(store.size()) + " samples, fewer than " +
                     std::to_string(f.probes) + " probes; lower --probes");
  }

  std::vector<std::string> labels;
  std::vector<std::unique_ptr<retrieval::Encoder>> encoders;
  for (std::size_t i = 0; i < f.checkpoints.size(); ++i) {
    nn::Model d = nn::load_checkpoint(f.checkpoints[i]);
    labels.push_back(f.names.empty() ? d.spec().name : f.names[i]);
    encoders.push_back(std::make_unique<retrieval::DiscriminatorEncoder>(retrieval::make_encoder(std::move(d))));
  }
  if (f.pixels) {
    labels.emplace_back("pixels");
    encoders.push_back(std::make_unique<retrieval::PixelEncoder>());
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (labels[i] == labels[j]) throw UsageError("duplicate encoder label " + labels[i] + "; use --name");
    }
  }

  const fs::path dir = f.out;
  make_dir(dir);
  std::ofstream summary = open_out(dir / "summary.txt");
  for (const std::string& sweep : f.sweeps) {
    bench::SweepSpec spec = bench::SweepSpec::defaults(bench::sweep_kind(sweep));
    spec.probes = f.probes;
    spec.seed = f.seed;
    std::vector<bench::InvarianceReport> reports;
    std::vector<Series> curves;
    for (std::size_t e = 0; e < encoders.size(); ++e) {
      reports.push_back(bench::run_sweep(*encoders[e], store, spec));
      const bench::InvarianceReport& r = reports.back();
      const std::string stem = labels[e] + "_" + sweep;
      {
        std::ofstream csv = open_out(dir / (stem + ".csv"));
        bench::write_report_csv(csv, r);
        std::ofstream raw = open_out(dir / (stem + "_raw.csv"));
        bench::write_raw_csv(raw, r);
      }
      double avg = 0.0;
      for (double m : r.mean) avg += m;
      avg /= static_cast<double>(r.mean.size());
      const std::string line = sweep + "." + labels[e] + ".mean_similarity=" + fmt(avg);
      summary << line << "\n";
      out << line << "\n";
      if (spec.kind == bench::SweepKind::kShift) {
        std::ofstream grid = open_out(dir / (stem + "_grid.csv"));
        bench::write_shift_grid_csv(grid, r);
        heatmap(r.mean, spec.axis_count(), spec.axis_count()).save_png(dir / (stem + ".png"));
      } else {
        Series s{labels[e], {}, r.mean};
        for (const auto& p : r.points) s.x.push_back(p.p1);
        curves.push_back(std::move(s));
      }
    }
    if (!curves.empty()) line_plot(curves).save_png(dir / (sweep + ".png"));
    if (reports.size() > 1) {
      std::vector<const bench::InvarianceReport*> ptrs;
      for (const auto& r : reports) ptrs.push_back(&r);
      std::ofstream cmp = open_out(dir / ("comparison_" + sweep + ".csv"));
      bench::write_comparison_csv(cmp, labels, ptrs);
    }
  }
  return kExitOk;
}

// ---- inspect ---------------------------------------------------------------

struct InspectFlags {
  std::string checkpoint;
  std::string index;
  std::uint64_t seed = 0;
};

void add_inspect(CLI::App& app, InspectFlags& f) {
  auto* cmd = app.add_subcommand("inspect", "Print checkpoint or index metadata as key=value lines");
  auto* c = cmd->add_option("--checkpoint", f.checkpoint, "Checkpoint file")->check(CLI::ExistingFile);
  cmd->add_option("--index", f.index, "Index file")->check(CLI::ExistingFile)->excludes(c);
  cmd->add_option("--seed", f.seed, "Unused")->capture_default_str();
}

int cmd_inspect(const InspectFlags& f, std::ostream& out) {
  if (!f.index.empty()) {
    const retrieval::EmbeddingIndex idx = retrieval::EmbeddingIndex::load(f.index);
    out << "file=" << f.index << "\n";
    out << "sha256=" << sha256_file(f.index) << "\n";
    out << "format=index\n";
    out << "encoder_id=" << idx.encoder_id() << "\n";
    out << "dataset_sha256=" << idx.dataset_hash() << "\n";
    out << "count=" << idx.size() << "\n";
    out << "dim=" << idx.dim() << "\n";
    return kExitOk;
  }
  if (f.checkpoint.empty()) throw UsageError("one of --checkpoint or --index is required");
  const nn::Model m = nn::load_checkpoint(f.checkpoint);
  const nn::NetworkSpec& s = m.spec();
  const nn::ParamCounts pc = m.count_params();
  out << "file=" << f.checkpoint << "\n";
  out << "sha256=" << sha256_file(f.checkpoint) << "\n";
  out << "format=checkpoint\n";
  out << "architecture=" << s.name << "\n";
  out << "role=" << (s.role == nn::Role::kGenerator ? "generator" : "discriminator") << "\n";
  out << "seed=" << m.seed() << "\n";
  out << "input=" << s.input.str() << "\n";
  out << "output=" << s.output.str() << "\n";
  out << "layers=" << s.layers.size() << "\n";
  for (std::size_t i = 0; i < s.layers.size(); ++i) out << "layer." << i << "=" << s.layers[i].describe() << "\n";
  out << "params.weights=" << pc.weights << "\n";
  out << "params.biases=" << pc.biases << "\n";
  out << "params.gammas=" << pc.gammas << "\n";
  out << "params.betas=" << pc.betas << "\n";
  out << "params.total=" << pc.total() << "\n";
  if (s.role == nn::Role::kDiscriminator) {
    out << "encoder_id=" << retrieval::make_encoder(m).id() << "\n";
  }
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app("Sketch GAN training, retrieval and invariance benchmarks", "skgan");
  app.require_subcommand(1);
  GenDataFlags gen;
  TrainFlags tr;
  EncodeFlags enc;
  QueryFlags qu;
  BenchFlags be;
  InspectFlags in;
  add_gen_data(app, gen);
  add_train(app, tr);
  add_encode(app, enc);
  add_query(app, qu);
  add_bench(app, be);
  add_inspect(app, in);

  try {
    const std::vector<std::string> full = expand_config(args);
    std::vector<std::string> rev(full.rbegin(), full.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    if (name == "gen-data") return cmd_gen_data(gen, out);
    if (name == "train") return cmd_train(tr, out, err);
    if (name == "encode") return cmd_encode(enc, out);
    if (name == "query") return cmd_query(qu, out);
    if (name == "bench") return cmd_bench(be, out);
    if (name == "inspect") return cmd_inspect(in, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace skgan::cli
