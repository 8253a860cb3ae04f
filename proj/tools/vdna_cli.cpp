// vdna: command-line front end for building and comparing VDNAs.

#include <glob.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>
#include <unordered_set>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "vdna/actio.hpp"
#include "vdna/attrweights.hpp"
#include "vdna/calib.hpp"
#include "vdna/detail/csv.hpp"
#include "vdna/evalharness.hpp"
#include "vdna/layer_fd.hpp"
#include "vdna/metrics.hpp"
#include "vdna/vdna.hpp"
#include "vdna/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<std::string> expand_glob(const std::string& pattern) {
  glob_t g{};
  const int rc = ::glob(pattern.c_str(), 0, nullptr, &g);
  std::vector<std::string> out;
  if (rc == 0) {
    for (std::size_t i = 0; i < g.gl_pathc; ++i) out.emplace_back(g.gl_pathv[i]);
  }
  ::globfree(&g);
  if (rc != 0 && rc != GLOB_NOMATCH) throw vdna::IoError("cannot expand '" + pattern + "'");
  if (out.empty()) throw vdna::ArgumentError("no files match '" + pattern + "'");
  std::sort(out.begin(), out.end());
  return out;
}

unsigned worker_count() {
  unsigned n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("VDNA_THREADS")) {
    char* end = nullptr;
    const long cap = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || cap < 1) {
      throw vdna::ArgumentError("VDNA_THREADS must be a positive integer");
    }
    n = std::min<unsigned>(n, static_cast<unsigned>(cap));
  }
  return n;
}

std::string stem_of(const std::string& path) { return fs::path(path).stem().string(); }

struct AttributeSpec {
  std::string name;
  std::string with;
  std::string without;
};

struct Manifest {
  std::vector<AttributeSpec> pairs;
  std::optional<AttributeSpec> target;
};

// {"target": {...}?, "pairs": [{"name", "with", "without"}, ...]}; paths are
// relative to the manifest's directory.
Manifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw vdna::IoError("cannot open '" + path + "' for reading");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw vdna::FormatError("'" + path + "': " + e.what());
  }
  const auto base = fs::path(path).parent_path();
  auto resolve = [&](const std::string& p) {
    const fs::path fp(p);
    return (fp.is_absolute() ? fp : base / fp).string();
  };
  auto spec = [&](const json& e) {
    try {
      return AttributeSpec{e.value("name", std::string()), resolve(e.at("with").get<std::string>()),
                           resolve(e.at("without").get<std::string>())};
    } catch (const json::exception& ex) {
      throw vdna::FormatError("'" + path + "': malformed pair entry: " + ex.what());
    }
  };
  Manifest m;
  if (j.contains("target")) m.target = spec(j.at("target"));
  if (j.contains("pairs")) {
    for (const auto& e : j.at("pairs")) m.pairs.push_back(spec(e));
  }
  return m;
}

std::vector<vdna::AttributePair> load_pairs(const std::vector<AttributeSpec>& specs,
                                            std::vector<std::string>& excluded) {
  std::vector<vdna::AttributePair> out;
  for (const auto& s : specs) {
    const auto a = vdna::Vdna::load(s.with);
    const auto b = vdna::Vdna::load(s.without);
    try {
      out.push_back(vdna::AttributePair::from_vdnas(s.name, a, b));
    } catch (const vdna::NumericError&) {
      excluded.push_back(s.name);
    }
  }
  return out;
}

void write_per_neuron_csv(const std::string& path, const vdna::LayerTable& layers,
                          const std::vector<double>& dist, const vdna::WeightVector& w) {
  auto out = vdna::detail::open_out(path);
  out << "layer,neuron,distance,weight\n";
  std::size_t flat = 0;
  for (const auto& l : layers) {
    for (std::uint32_t n = 0; n < l.neurons; ++n, ++flat) {
      out << l.name << ',' << n << ',' << vdna::detail::format_double(dist[flat]) << ','
          << vdna::detail::format_double(w[flat]) << '\n';
    }
  }
  vdna::detail::finish_write(out, path);
}

std::vector<std::size_t> read_neuron_selection(const std::string& path) {
  const auto rows = vdna::detail::read_csv(path);
  if (rows.empty()) throw vdna::FormatError("'" + path + "' is empty");
  const auto& head = rows[0];
  const auto col = std::find(head.begin(), head.end(), "flat_index");
  if (col == head.end()) throw vdna::FormatError("'" + path + "' has no flat_index column");
  const auto c = static_cast<std::size_t>(col - head.begin());
  std::vector<std::size_t> sel;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    sel.push_back(static_cast<std::size_t>(vdna::detail::parse_double(rows[r].at(c), path)));
  }
  return sel;
}

vdna::WeightVector resolve_weights(const std::string& weights_path, std::size_t n) {
  if (weights_path.empty()) return vdna::WeightVector::uniform(n);
  auto w = vdna::WeightVector::load(weights_path);
  if (w.size() != n) {
    throw vdna::ArgumentError("weights in '" + weights_path + "' cover " + std::to_string(w.size()) +
                              " neurons, VDNAs have " + std::to_string(n));
  }
  return w;
}

json vdna_summary(const vdna::Vdna& v) {
  return {{"kind", vdna::to_string(v.kind())}, {"extractor_id", v.extractor_id()},
          {"neurons", v.neuron_count()},      {"bins", v.bins()},
          {"n_images", v.n_images()},         {"calibration", v.calibration()}};
}

// ---------------------------------------------------------------------------

struct Options {
  std::string report;
  std::string dumps;
  std::string out;
  std::string cal;
  std::string kind = "hist";
  std::uint32_t bins = vdna::kDefaultBins;
  std::string degenerate = "zero";
  std::vector<std::string> inputs;
  std::string info_file;
  bool info_json = false;
  std::string mode = "emd";
  std::string weights;
  std::string per_neuron;
  std::string unit = "bins";
  std::string target_with, target_without, others_manifest, val_manifest, trace;
  bool allow_negative = false;
  double lr = 1e-5;
  std::size_t patience = 50;
  std::size_t max_iters = 10000;
  std::string pairs;
  std::size_t k = 0;
  std::string ref, items, neurons;
  std::string ranked, positives;
  std::string miou, pred;
  std::size_t random_baseline = 0;
  std::uint64_t seed = 0;
};

json cmd_calibrate(const Options& o) {
  const auto files = expand_glob(o.dumps);
  std::optional<vdna::CalibrationTable> table;
  std::uint64_t images = 0;
  for (const auto& f : files) {
    vdna::DumpReader reader(f);
    if (!table) table = vdna::CalibrationTable::for_dump(reader.header());
    table->observe(reader);
    images += reader.records_read();
  }
  table->save(o.out);
  const auto degenerate = table->degenerate_neurons();
  std::cout << "calibrated " << table->neuron_count() << " neurons from " << images
            << " images in " << files.size() << " dump(s); " << degenerate.size()
            << " degenerate\n";
  return {{"inputs", {{"dumps", files}}},
          {"outputs", {{"calibration", o.out},
                       {"neurons", table->neuron_count()},
                       {"images", images},
                       {"degenerate_neurons", degenerate},
                       {"fingerprint", table->fingerprint()}}}};
}

json cmd_fit(const Options& o) {
  if (o.bins == 0) throw vdna::ArgumentError("--bins must be positive");
  const auto files = expand_glob(o.dumps);
  const auto cal = vdna::CalibrationTable::load(o.cal);
  vdna::FitOptions opt;
  opt.kind = vdna::kind_from_string(o.kind);
  opt.bins = o.bins;
  if (o.degenerate == "error") {
    opt.degenerate = vdna::DegeneratePolicy::kError;
  } else if (o.degenerate != "zero") {
    throw vdna::ArgumentError("--degenerate must be 'zero' or 'error'");
  }
  const auto threads = worker_count();
  const auto v = vdna::fit_files(files, cal, opt, threads);
  v.save(o.out);
  std::cout << "fitted " << vdna::to_string(v.kind()) << " VDNA over " << v.n_images()
            << " images, " << v.neuron_count() << " neurons -> " << o.out << "\n";
  return {{"inputs", {{"dumps", files}, {"calibration", o.cal}}},
          {"config", {{"kind", o.kind}, {"bins", o.bins}, {"degenerate", o.degenerate},
                      {"threads", threads}}},
          {"outputs", {{"vdna", o.out}, {"summary", vdna_summary(v)},
                       {"degenerate_neurons", cal.degenerate_neurons().size()}}}};
}

json cmd_merge(const Options& o) {
  if (o.inputs.size() < 2) throw vdna::ArgumentError("merge needs at least two inputs");
  auto v = vdna::Vdna::load(o.inputs.front());
  for (std::size_t i = 1; i < o.inputs.size(); ++i) {
    try {
      v.merge(vdna::Vdna::load(o.inputs[i]));
    } catch (const vdna::IncompatibleError& e) {
      throw vdna::IncompatibleError("'" + o.inputs[i] + "': " + e.what());
    }
  }
  v.save(o.out);
  std::cout << "merged " << o.inputs.size() << " VDNAs (" << v.n_images() << " images) -> "
            << o.out << "\n";
  return {{"inputs", {{"vdnas", o.inputs}}}, {"outputs", {{"vdna", o.out}, {"summary", vdna_summary(v)}}}};
}

json cmd_info(const Options& o) {
  const auto info = vdna::read_vdna_info(o.info_file);
  json layers = json::array();
  std::size_t neurons = 0;
  for (const auto& l : info.layers) {
    layers.push_back({{"name", l.name}, {"neurons", l.neurons}});
    neurons += l.neurons;
  }
  json j = {{"kind", vdna::to_string(info.kind)},
            {"extractor_id", info.extractor_id},
            {"neurons", neurons},
            {"layers", layers},
            {"bins", info.bins},
            {"n_images", info.n_images},
            {"calibration", info.calibration},
            {"payload_bytes", info.payload_bytes},
            {"compressed_bytes", info.compressed_bytes},
            {"file_bytes", info.file_bytes}};
  if (o.info_json) {
    std::cout << j.dump(2) << "\n";
  } else {
    std::cout << "kind: " << vdna::to_string(info.kind) << "\n"
              << "extractor: " << info.extractor_id << "\n"
              << "neurons: " << neurons << " in " << info.layers.size() << " layer(s)\n";
    for (const auto& l : info.layers) std::cout << "  " << l.name << ": " << l.neurons << "\n";
    if (info.kind == vdna::Kind::kHist) std::cout << "bins: " << info.bins << "\n";
    std::cout << "n_images: " << info.n_images << "\n"
              << "calibration: " << info.calibration << "\n"
              << "payload_bytes: " << info.payload_bytes << "\n"
              << "compressed_bytes: " << info.compressed_bytes << "\n"
              << "file_bytes: " << info.file_bytes << "\n";
  }
  return {{"inputs", {{"vdna", o.info_file}}}, {"outputs", j}};
}

json cmd_layer_stats(const Options& o) {
  const auto files = expand_glob(o.dumps);
  std::optional<vdna::LayerStatsBuilder> builder;
  for (const auto& f : files) {
    vdna::DumpReader reader(f);
    if (!builder) builder.emplace(reader.header());
    builder->add(reader);
  }
  const auto stats = builder->finish();
  stats.save(o.out);
  json warnings = json::array();
  for (std::size_t l = 0; l < stats.layers.size(); ++l) {
    if (stats.gaussians[l].underdetermined()) {
      const auto msg = "layer '" + stats.layers[l].name + "': " +
                       std::to_string(stats.gaussians[l].count) + " images for " +
                       std::to_string(stats.layers[l].neurons) + " dimensions";
      std::cerr << "warning: " << msg << "\n";
      warnings.push_back(msg);
    }
  }
  std::cout << "layer statistics over " << (stats.gaussians.empty() ? 0 : stats.gaussians[0].count)
            << " images -> " << o.out << "\n";
  return {{"inputs", {{"dumps", files}}}, {"outputs", {{"stats", o.out}, {"warnings", warnings}}}};
}

json cmd_dist(const Options& o) {
  if (o.inputs.size() != 2) throw vdna::ArgumentError("dist takes exactly two inputs");
  json out;
  if (o.mode == "layer-fd") {
    const auto a = vdna::LayerStats::load(o.inputs[0]);
    const auto b = vdna::LayerStats::load(o.inputs[1]);
    std::optional<vdna::WeightVector> w;
    if (!o.weights.empty()) w = vdna::WeightVector::load(o.weights);
    const auto r = vdna::fd_layers(a, b, w ? &*w : nullptr);
    if (!o.per_neuron.empty()) {
      const auto lw = w ? *w : vdna::WeightVector::uniform(r.per_layer.size());
      auto f = vdna::detail::open_out(o.per_neuron);
      f << "layer,distance,weight\n";
      for (std::size_t l = 0; l < r.per_layer.size(); ++l) {
        f << a.layers[l].name << ',' << vdna::detail::format_double(r.per_layer[l]) << ','
          << vdna::detail::format_double(lw[l]) << '\n';
      }
      vdna::detail::finish_write(f, o.per_neuron);
    }
    std::cout << vdna::detail::format_double(r.combined) << "\n";
    out = {{"distance", r.combined}, {"per_layer", r.per_layer}};
  } else {
    const auto a = vdna::Vdna::load(o.inputs[0]);
    const auto b = vdna::Vdna::load(o.inputs[1]);
    a.check_comparable(b);
    if (o.mode == "emd" && a.kind() != vdna::Kind::kHist) {
      throw vdna::IncompatibleError("--mode emd needs histogram VDNAs");
    }
    if (o.mode == "fd" && a.kind() != vdna::Kind::kGauss) {
      throw vdna::IncompatibleError("--mode fd needs Gaussian VDNAs");
    }
    if (o.mode != "emd" && o.mode != "fd") throw vdna::ArgumentError("unknown --mode '" + o.mode + "'");
    vdna::EmdUnit unit = vdna::EmdUnit::kBins;
    if (o.unit == "activation") {
      unit = vdna::EmdUnit::kActivation;
    } else if (o.unit != "bins") {
      throw vdna::ArgumentError("--unit must be 'bins' or 'activation'");
    }
    const auto d = vdna::neuron_distances(a, b, unit);
    const auto w = resolve_weights(o.weights, d.size());
    const double total = vdna::weighted_sum(d, w);
    if (!o.per_neuron.empty()) write_per_neuron_csv(o.per_neuron, a.layers(), d, w);
    std::cout << vdna::detail::format_double(total) << "\n";
    out = {{"distance", total}};
  }
  return {{"inputs", {{"a", o.inputs[0]}, {"b", o.inputs[1]}, {"weights", o.weights}}},
          {"config", {{"mode", o.mode}, {"unit", o.unit}}},
          {"outputs", out}};
}

json cmd_optimize(const Options& o) {
  vdna::OptimizerConfig cfg;
  cfg.learning_rate = o.lr;
  cfg.patience = o.patience;
  cfg.max_iters = o.max_iters;
  cfg.nonneg_projection = !o.allow_negative;
  cfg.validate();

  const auto with = vdna::Vdna::load(o.target_with);
  const auto without = vdna::Vdna::load(o.target_without);
  std::vector<std::string> excluded;
  vdna::AttributeProblem train{vdna::AttributePair::from_vdnas("target", with, without),
                               load_pairs(read_manifest(o.others_manifest).pairs, excluded)};

  std::optional<vdna::AttributeProblem> val;
  if (!o.val_manifest.empty()) {
    const auto m = read_manifest(o.val_manifest);
    vdna::AttributePair target = train.target;
    if (m.target) {
      target = vdna::AttributePair::from_vdnas("target", vdna::Vdna::load(m.target->with),
                                               vdna::Vdna::load(m.target->without));
    }
    val = vdna::AttributeProblem{std::move(target), load_pairs(m.pairs, excluded)};
  }
  for (const auto& e : excluded) {
    std::cerr << "warning: pair '" << e << "' has zero baseline distance and was excluded\n";
  }
  const auto res = vdna::optimize_weights(train, val ? &*val : nullptr, cfg);

  json meta = {{"extractor_id", with.extractor_id()}, {"config", cfg.to_json()}};
  res.weights.save(o.out, meta);

  if (!o.trace.empty()) {
    auto f = vdna::detail::open_out(o.trace);
    f << "iteration,train_loss,val_loss\n";
    for (const auto& t : res.trace) {
      f << t.iteration << ',' << vdna::detail::format_double(t.train_loss) << ','
        << vdna::detail::format_double(t.val_loss) << '\n';
    }
    vdna::detail::finish_write(f, o.trace);
  }

  auto summarize = [&](const vdna::AttributeProblem& p) {
    double others = 0.0;
    for (const auto& b : p.others) others += std::abs(vdna::sensitivity_deviation(b, res.weights));
    return json{{"target_deviation", vdna::sensitivity_deviation(p.target, res.weights)},
                {"mean_abs_other_deviation", others / static_cast<double>(p.others.size())},
                {"loss", vdna::attribute_loss(p, res.weights.values())}};
  };
  json outputs = {{"weights", o.out},
                  {"best_iteration", res.best_iteration},
                  {"iterations", res.trace.size() - 1},
                  {"stopped_early", res.stopped_early},
                  {"nonneg_projection", cfg.nonneg_projection},
                  {"excluded_pairs", excluded},
                  {"train", summarize(train)}};
  if (val) outputs["validation"] = summarize(*val);
  std::cout << "target deviation " << outputs["train"]["target_deviation"].get<double>()
            << ", mean |other deviation| "
            << outputs["train"]["mean_abs_other_deviation"].get<double>() << " after "
            << res.best_iteration << " iterations -> " << o.out << "\n";
  return {{"inputs", {{"target_with", o.target_with}, {"target_without", o.target_without},
                      {"others_manifest", o.others_manifest}, {"val_manifest", o.val_manifest}}},
          {"config", cfg.to_json()},
          {"outputs", outputs}};
}

json cmd_select(const Options& o) {
  if (o.k == 0) throw vdna::ArgumentError("-k must be positive");
  const auto m = read_manifest(o.pairs);
  std::vector<AttributeSpec> specs = m.pairs;
  if (m.target) specs.insert(specs.begin(), *m.target);
  if (specs.empty()) throw vdna::ArgumentError("'" + o.pairs + "' lists no pairs");
  // All "with" sides are pooled into one VDNA, all "without" sides into another.
  auto with = vdna::Vdna::load(specs[0].with);
  auto without = vdna::Vdna::load(specs[0].without);
  for (std::size_t i = 1; i < specs.size(); ++i) {
    with.merge(vdna::Vdna::load(specs[i].with));
    without.merge(vdna::Vdna::load(specs[i].without));
  }
  const auto d = vdna::neuron_distances(with, without);
  const auto sel = vdna::select_sensitive_neurons(d, with.layers(), o.k);
  auto f = vdna::detail::open_out(o.out);
  f << "rank,layer,neuron,flat_index,distance\n";
  json picked = json::array();
  for (std::size_t r = 0; r < sel.size(); ++r) {
    f << r + 1 << ',' << with.layers()[sel[r].layer].name << ',' << sel[r].neuron << ','
      << sel[r].flat << ',' << vdna::detail::format_double(d[sel[r].flat]) << '\n';
    picked.push_back(sel[r].flat);
  }
  vdna::detail::finish_write(f, o.out);
  std::cout << "selected " << sel.size() << " neurons -> " << o.out << "\n";
  return {{"inputs", {{"pairs", o.pairs}}}, {"config", {{"k", o.k}}},
          {"outputs", {{"neurons", o.out}, {"flat_indices", picked}}}};
}

json cmd_rank(const Options& o) {
  if (!o.weights.empty() && !o.neurons.empty()) {
    throw vdna::ArgumentError("--weights and --neurons are mutually exclusive");
  }
  const auto ref = vdna::Vdna::load(o.ref);
  const auto files = expand_glob(o.items);
  std::vector<vdna::Vdna> dnas;
  dnas.reserve(files.size());
  std::vector<vdna::RankItem> items;
  for (const auto& f : files) dnas.push_back(vdna::Vdna::load(f));
  for (std::size_t i = 0; i < files.size(); ++i) items.push_back({stem_of(files[i]), &dnas[i]});
  const auto w = o.neurons.empty()
                     ? resolve_weights(o.weights, ref.neuron_count())
                     : vdna::WeightVector::from_selection(ref.neuron_count(), read_neuron_selection(o.neurons));
  const auto ranked = vdna::rank_against_reference(ref, items, w, worker_count());
  vdna::write_ranked_csv(o.out, ranked);
  std::cout << "ranked " << ranked.size() << " items -> " << o.out << "\n";
  return {{"inputs", {{"reference", o.ref}, {"items", files}, {"weights", o.weights},
                      {"neurons", o.neurons}}},
          {"outputs", {{"ranked", o.out}, {"count", ranked.size()}}}};
}

json cmd_pr(const Options& o) {
  const auto ranked = vdna::read_ranked_csv(o.ranked);
  std::ifstream in(o.positives);
  if (!in) throw vdna::IoError("cannot open '" + o.positives + "' for reading");
  std::unordered_set<std::string> pos;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) pos.insert(line);
  }
  const auto c = vdna::pr_curve(ranked, pos);
  if (!o.out.empty()) {
    auto f = vdna::detail::open_out(o.out);
    f << "recall,precision\n";
    for (std::size_t i = 0; i < c.recall.size(); ++i) {
      f << vdna::detail::format_double(c.recall[i]) << ','
        << vdna::detail::format_double(c.precision[i]) << '\n';
    }
    vdna::detail::finish_write(f, o.out);
  }
  std::cout << "auc " << vdna::detail::format_double(c.auc) << "\n";
  return {{"inputs", {{"ranked", o.ranked}, {"positives", o.positives}}},
          {"outputs", {{"auc", c.auc}, {"curve", o.out}}}};
}

json cmd_crossgen(const Options& o) {
  if (o.random_baseline > 0) {
    if (!o.pred.empty()) throw vdna::ArgumentError("--pred and --random-baseline are mutually exclusive");
    // The prediction matrix is irrelevant here; reuse the mIoU file for shape.
    const auto t = vdna::read_crossgen_csv(o.miou, o.miou);
    const auto s = vdna::random_ordering_baseline(t, o.random_baseline, o.seed);
    std::cout << vdna::detail::format_double(s.mean) << " +/- "
              << vdna::detail::format_double(s.stddev) << " (" << o.random_baseline << " samples)\n";
    return {{"inputs", {{"miou", o.miou}}},
            {"config", {{"trials", o.random_baseline}, {"seed", o.seed}}},
            {"outputs", {{"mean", s.mean}, {"std", s.stddev}, {"samples", s.samples}}}};
  }
  if (o.pred.empty()) throw vdna::ArgumentError("crossgen needs --pred or --random-baseline");
  const auto t = vdna::read_crossgen_csv(o.miou, o.pred);
  const double d = vdna::crossgen_discrepancy(t);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", d);
  std::cout << buf << "\n";
  return {{"inputs", {{"miou", o.miou}, {"pred", o.pred}}}, {"outputs", {{"discrepancy", d}}}};
}

void emit_report(const std::string& command, const std::string& dest, json body) {
  body["command"] = command;
  body["version"] = vdna::kVersion;
  if (dest.empty()) {
    std::cerr << body.dump() << "\n";
    return;
  }
  auto f = vdna::detail::open_out(dest);
  f << body.dump(2) << "\n";
  vdna::detail::finish_write(f, dest);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Build and compare VDNAs of image sets"};
  app.require_subcommand(1);
  app.fallthrough();
  Options o;
  app.add_option("--report", o.report, "Write the JSON run report here (default: stderr)");

  auto* calibrate = app.add_subcommand("calibrate", "Track per-neuron activation ranges");
  calibrate->add_option("--dumps", o.dumps, "Glob of activation dumps")->required();
  calibrate->add_option("--out", o.out, "Calibration file to write")->required();

  auto* fit = app.add_subcommand("fit", "Build a VDNA from activation dumps");
  fit->add_option("--dumps", o.dumps, "Glob of activation dumps")->required();
  fit->add_option("--cal", o.cal, "Calibration file")->required();
  fit->add_option("--kind", o.kind, "hist or gauss")->check(CLI::IsMember({"hist", "gauss"}));
  fit->add_option("--bins", o.bins, "Histogram bins");
  fit->add_option("--degenerate", o.degenerate, "Constant neurons: zero or error")
      ->check(CLI::IsMember({"zero", "error"}));
  fit->add_option("--out", o.out, "VDNA file to write")->required();

  auto* merge = app.add_subcommand("merge", "Merge VDNAs of the same extractor and calibration");
  merge->add_option("inputs", o.inputs, "VDNA files")->required();
  merge->add_option("--out", o.out, "VDNA file to write")->required();

  auto* info = app.add_subcommand("info", "Print VDNA metadata");
  info->add_option("file", o.info_file, "VDNA file")->required();
  info->add_flag("--json", o.info_json, "Print as JSON");

  auto* lstats = app.add_subcommand("layer-stats", "Layer-wise Gaussian statistics for layer-fd");
  lstats->add_option("--dumps", o.dumps, "Glob of activation dumps")->required();
  lstats->add_option("--out", o.out, "Statistics file to write")->required();

  auto* dist = app.add_subcommand("dist", "Distance between two VDNAs");
  dist->add_option("--mode", o.mode, "emd, fd or layer-fd")->check(CLI::IsMember({"emd", "fd", "layer-fd"}));
  dist->add_option("inputs", o.inputs, "Two VDNA (or layer-stats) files")->required()->expected(2);
  dist->add_option("--weights", o.weights, "Weight file (default: uniform)");
  dist->add_option("--per-neuron", o.per_neuron, "Write per-neuron distances to this CSV");
  dist->add_option("--unit", o.unit, "EMD unit: bins or activation")->check(CLI::IsMember({"bins", "activation"}));

  auto* opt = app.add_subcommand("optimize-weights", "Learn weights that ignore one attribute");
  opt->add_option("--target-with", o.target_with)->required();
  opt->add_option("--target-without", o.target_without)->required();
  opt->add_option("--others-manifest", o.others_manifest)->required();
  opt->add_option("--val-manifest", o.val_manifest);
  opt->add_option("--out", o.out)->required();
  opt->add_flag("--allow-negative", o.allow_negative, "Do not project weights onto w >= 0");
  opt->add_option("--lr", o.lr);
  opt->add_option("--patience", o.patience);
  opt->add_option("--max-iters", o.max_iters);
  opt->add_option("--trace", o.trace, "Write the loss trace to this CSV");

  auto* select = app.add_subcommand("select-neurons", "Most sensitive neurons for pooled pairs");
  select->add_option("--pairs", o.pairs, "Pairs manifest")->required();
  select->add_option("-k", o.k, "Number of neurons")->required();
  select->add_option("--out", o.out)->required();

  auto* rank = app.add_subcommand("rank", "Rank per-item VDNAs by distance to a reference");
  rank->add_option("--ref", o.ref)->required();
  rank->add_option("--items", o.items, "Glob of item VDNAs")->required();
  rank->add_option("--weights", o.weights);
  rank->add_option("--neurons", o.neurons, "Neuron selection CSV from select-neurons");
  rank->add_option("--out", o.out)->required();

  auto* pr = app.add_subcommand("pr", "Precision-recall curve and AUC of a ranking");
  pr->add_option("--ranked", o.ranked)->required();
  pr->add_option("--positives", o.positives, "One positive id per line")->required();
  pr->add_option("--out", o.out, "Write (recall, precision) CSV");

  auto* cross = app.add_subcommand("crossgen", "Cross-dataset generalisation discrepancy");
  cross->add_option("--miou", o.miou)->required();
  cross->add_option("--pred", o.pred);
  cross->add_option("--random-baseline", o.random_baseline, "Number of random trials");
  cross->add_option("--seed", o.seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::cerr << "error: ArgumentError: " << msg << "\n";
    return 2;
  }

  const auto* sub = app.get_subcommands().front();
  const std::string name = sub->get_name();
  try {
    json report;
    if (name == "calibrate") report = cmd_calibrate(o);
    else if (name == "fit") report = cmd_fit(o);
    else if (name == "merge") report = cmd_merge(o);
    else if (name == "info") report = cmd_info(o);
    else if (name == "layer-stats") report = cmd_layer_stats(o);
    else if (name == "dist") report = cmd_dist(o);
    else if (name == "optimize-weights") report = cmd_optimize(o);
    else if (name == "select-neurons") report = cmd_select(o);
    else if (name == "rank") report = cmd_rank(o);
    else if (name == "pr") report = cmd_pr(o);
    else if (name == "crossgen") report = cmd_crossgen(o);
    emit_report(name, o.report, std::move(report));
  } catch (const vdna::ArgumentError& e) {
    std::cerr << "error: " << e.error_class() << ": " << e.what() << "\n";
    return 2;
  } catch (const vdna::Error& e) {
    std::cerr << "error: " << e.error_class() << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: InternalError: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
