// gfpn: command line front end for segmentation, graph construction,
// training, evaluation, gradient checks and ablations.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "gfpn/errors.hpp"
#include "gfpn/pipeline/ablation.hpp"
#include "gfpn/pipeline/checkpoint.hpp"
#include "gfpn/pipeline/gradcheck_suite.hpp"
#include "gfpn/pipeline/train.hpp"
#include "json.hpp"

namespace {

using nlohmann::json;

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw gfpn::FormatError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    if (!text.empty() && text.back() != '\n') std::cout << '\n';
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw gfpn::FormatError("cannot write " + path);
  out << text;
}

json tensor_json(const gfpn::Tensor& t) {
  return json{{"shape", t.shape()}, {"data", std::vector<double>(t.data().begin(), t.data().end())}};
}

int cmd_segment(const std::string& image, std::size_t n, const std::string& out) {
  const gfpn::Image img = gfpn::read_ppm_file(image);
  const auto h = gfpn::extract_hierarchy(gfpn::build_merge_tree(img), n);
  write_text(out, gfpn::hierarchy_to_json(h));
  return 0;
}

int cmd_graph(const std::string& hierarchy, const std::string& out) {
  const auto h = gfpn::hierarchy_from_json(read_text(hierarchy));
  write_text(out, gfpn::graph_to_json(gfpn::build_graph(h)));
  return 0;
}

int cmd_forward(const std::string& image, const std::string& ckpt_path, bool dump, const std::string& out) {
  const gfpn::Checkpoint ckpt = gfpn::load_checkpoint(ckpt_path);
  const auto& config = ckpt.config;
  gfpn::SyntheticSample sample;
  sample.image = gfpn::read_ppm_file(image);
  sample.pixel_labels.assign(sample.image.height() * sample.image.width(), 0);
  const auto prepared =
      gfpn::prepare_sample(sample, config.superpixels, config.ablation.graphfpn, config.shape_classes + 1);

  gfpn::Tape tape;
  const auto vars = gfpn::bind_model(tape, ckpt.params, false);
  const auto result = gfpn::forward_pipeline(vars, prepared, config);

  json j;
  j["logits"] = tensor_json(result.logits.value());
  std::vector<std::size_t> predicted;
  const auto& z = result.logits.value();
  const std::size_t k = z.dim(1);
  for (std::size_t r = 0; r < z.dim(0); ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < k; ++c)
      if (z[r * k + c] > z[r * k + best]) best = c;
    predicted.push_back(best);
  }
  j["predicted"] = predicted;
  if (dump) {
    for (const auto& v : result.backbone) j["backbone"].push_back(tensor_json(v.value()));
    for (const auto& v : result.pyramid) j["pyramid"].push_back(tensor_json(v.value()));
    for (const auto& v : result.fused) j["fused"].push_back(tensor_json(v.value()));
    if (result.nodes.valid()) j["nodes"] = tensor_json(result.nodes.value());
  }
  write_text(out, j.dump());
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& out, const std::string& log_path) {
  gfpn::TrainConfig config;
  if (config_path.empty()) {
    gfpn::apply_environment(config);
  } else {
    config = gfpn::load_config_file(config_path);
  }
  std::ofstream log_file;
  std::ostream* log = &std::cout;
  if (!log_path.empty()) {
    log_file.open(log_path, std::ios::binary);
    if (!log_file) throw gfpn::FormatError("cannot write " + log_path);
    log = &log_file;
  }
  const auto result = gfpn::train(config, log);
  gfpn::save_checkpoint(out, {config, result.params, result.rng_state});
  std::cerr << "checkpoint " << out << " ("
            << gfpn::fnv1a_hex(gfpn::serialize_checkpoint({config, result.params, result.rng_state})) << ")\n";
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data, const std::string& out) {
  const gfpn::Checkpoint ckpt = gfpn::load_checkpoint(ckpt_path);
  const auto& config = ckpt.config;
  const auto samples = gfpn::prepare_dataset(gfpn::read_dataset_dir(data), config.superpixels,
                                             config.ablation.graphfpn, config.shape_classes + 1);
  write_text(out, gfpn::eval_report_to_json(gfpn::evaluate(ckpt.params, config, samples)));
  return 0;
}

int cmd_gradcheck(const std::string& level_name, double tolerance) {
  const gfpn::GradCheckLevel level = level_name == "micro"   ? gfpn::GradCheckLevel::kMicro
                                     : level_name == "layer" ? gfpn::GradCheckLevel::kLayer
                                                             : gfpn::GradCheckLevel::kFull;
  bool ok = true;
  for (const auto& c : gfpn::run_gradcheck_suite(level)) {
    const bool pass = c.result.max_rel_error < tolerance;
    ok = ok && pass;
    std::printf("%-34s %-4s max_rel_err=%.3e coords=%zu\n", c.name.c_str(), pass ? "ok" : "FAIL",
                c.result.max_rel_error, c.result.coordinates_checked);
  }
  return ok ? 0 : 1;
}

int cmd_ablate(const std::string& grid_path, const std::string& md_out, const std::string& json_out) {
  gfpn::AblationGrid grid;
  if (grid_path.empty()) {
    gfpn::TrainConfig base;
    gfpn::apply_environment(base);
    grid = gfpn::standard_ablation_grid(base);
  } else {
    grid = gfpn::ablation_grid_from_json(read_text(grid_path));
  }
  std::cerr << grid.runs.size() << " runs\n";
  const auto results = gfpn::run_ablation(grid, [](const gfpn::AblationResult& r) {
    std::cerr << r.key << ": test_accuracy=" << r.final_test_accuracy << " ckpt=" << r.checkpoint_hash << "\n";
  });
  write_text(md_out, gfpn::ablation_markdown(grid, results));
  if (!json_out.empty()) write_text(json_out, gfpn::ablation_json(grid, results));
  return 0;
}

int cmd_gen_data(std::uint64_t seed, std::size_t count, std::size_t size, std::size_t classes,
                 const std::string& out) {
  gfpn::write_dataset_dir(out, gfpn::gen_dataset(seed, count, size, classes));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GraphFPN desk-scale toolkit"};
  app.require_subcommand(1);

  std::string image;
  std::string out;
  std::size_t n = 256;
  auto* segment = app.add_subcommand("segment", "Superpixel hierarchy of a PPM image as JSON");
  segment->add_option("image", image, "input .ppm")->required()->check(CLI::ExistingFile);
  segment->add_option("--n", n, "finest superpixel count")->capture_default_str();
  segment->add_option("--out", out, "output JSON (default stdout)");

  std::string hierarchy;
  auto* graph = app.add_subcommand("graph", "Graph pyramid of a hierarchy JSON");
  graph->add_option("hierarchy", hierarchy, "hierarchy JSON from `segment`")->required()->check(CLI::ExistingFile);
  graph->add_option("--out", out, "output JSON (default stdout)");

  std::string ckpt;
  bool dump = false;
  auto* forward = app.add_subcommand("forward", "Per-superpixel logits for one image");
  forward->add_option("image", image, "input .ppm")->required()->check(CLI::ExistingFile);
  forward->add_option("--ckpt", ckpt, "checkpoint")->required()->check(CLI::ExistingFile);
  forward->add_flag("--dump-features", dump, "include backbone, pyramid and node features");
  forward->add_option("--out", out, "output JSON (default stdout)");

  std::string config;
  std::string log;
  auto* train = app.add_subcommand("train", "Train on the synthetic task and write a checkpoint");
  train->add_option("--config", config, "JSON config; defaults apply to missing keys")->check(CLI::ExistingFile);
  train->add_option("--out", out, "checkpoint path")->required();
  train->add_option("--log", log, "metrics log (JSON lines, default stdout)");

  std::string data;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset directory");
  eval->add_option("--ckpt", ckpt, "checkpoint")->required()->check(CLI::ExistingFile);
  eval->add_option("--data", data, "directory written by gen-data")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--out", out, "report JSON (default stdout)");

  std::string level = "micro";
  double tolerance = 1e-4;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  gradcheck->add_option("--level", level, "micro | layer | full")
      ->check(CLI::IsMember({"micro", "layer", "full"}))
      ->capture_default_str();
  gradcheck->add_option("--tol", tolerance, "max relative error")->capture_default_str();

  std::string grid;
  std::string json_out;
  auto* ablate = app.add_subcommand("ablate", "Train every configuration of an ablation grid");
  ablate->add_option("--grid", grid, "grid JSON; default: standard grid over the default config")
      ->check(CLI::ExistingFile);
  ablate->add_option("--out", out, "markdown table (default stdout)");
  ablate->add_option("--json", json_out, "JSON table");

  std::uint64_t seed = 0;
  std::size_t count = 16;
  std::size_t size = 64;
  std::size_t classes = 3;
  auto* gen = app.add_subcommand("gen-data", "Write a synthetic dataset directory");
  gen->add_option("--seed", seed)->capture_default_str();
  gen->add_option("--count", count)->capture_default_str();
  gen->add_option("--size", size)->capture_default_str();
  gen->add_option("--classes", classes)->capture_default_str();
  gen->add_option("--out", out, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*segment) return cmd_segment(image, n, out);
    if (*graph) return cmd_graph(hierarchy, out);
    if (*forward) return cmd_forward(image, ckpt, dump, out);
    if (*train) return cmd_train(config, out, log);
    if (*eval) return cmd_eval(ckpt, data, out);
    if (*gradcheck) return cmd_gradcheck(level, tolerance);
    if (*ablate) return cmd_ablate(grid, out, json_out);
    if (*gen) return cmd_gen_data(seed, count, size, classes, out);
  } catch (const std::exception& e) {
    std::cerr << "gfpn: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
