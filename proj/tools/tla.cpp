// Command-line driver: one verb per pipeline stage.
#include "selfcheck.hpp"

#include "tla/config.hpp"
#include "tla/experiment.hpp"
#include "tla/runtime.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using namespace tla;

namespace {

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string work = "work";
};

std::uint64_t resolve_seed(const Options& o) {
  if (o.seed) return *o.seed;
  if (const char* env = std::getenv("TLA_SEED")) {
    try {
      std::size_t used = 0;
      const unsigned long long v = std::stoull(env, &used);
      if (used == std::string(env).size()) return v;
    } catch (const std::exception&) {
    }
    throw Error(std::string("TLA_SEED is not a non-negative integer: '") + env + "'");
  }
  return 1;
}

ExperimentConfig load_config(const Options& o) {
  const std::string text = o.config_path.empty() ? std::string() : read_text_file(o.config_path);
  return ExperimentConfig::from(parse_config(text, experiment_schema()));
}

void log_line(const std::string& s) { std::cerr << "[tla] " << s << '\n'; }

EpochCallback epoch_logger(const std::string& stage) {
  return [stage](int epoch, double loss) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%s epoch %d loss %.6f", stage.c_str(), epoch, loss);
    log_line(buf);
  };
}

fs::path work_dir(const Options& o) {
  fs::create_directories(o.work);
  return o.work;
}

Network need_net(const fs::path& dir, const char* name, const char* producer) {
  const fs::path p = dir / name;
  if (!fs::exists(p)) throw Error(p.string() + " is missing; run '" + producer + "' first");
  return load_net_file(p.string());
}

PartDetectorBank need_bank(const fs::path& dir) {
  const fs::path p = dir / artifact::bank;
  if (!fs::exists(p)) throw Error(p.string() + " is missing; run 'build-parts' first");
  return PartDetectorBank::parse(read_text_file(p));
}

void save_losses(const fs::path& dir, const std::string& stem, const std::vector<double>& losses) {
  const std::string text = epoch_series_jsonl(losses);
  write_text_file(dir / (stem + "_losses.jsonl"), text);
  std::cout << text;
}

std::string box_text(const Box& b) {
  return std::to_string(b.x) + " " + std::to_string(b.y) + " " + std::to_string(b.w) + " " + std::to_string(b.h);
}

void cmd_gen_data(const Options& o, const std::string& out_arg) {
  const ExperimentConfig cfg = load_config(o);
  const std::uint64_t seed = resolve_seed(o);
  const SyntheticBenchmark data = gen_synthetic(cfg.data, stage_seed(seed, "data"));
  const fs::path out = out_arg.empty() ? work_dir(o) / "data" : fs::path(out_arg);
  std::string labels;
  auto box_json = [](const Box& b) { return nlohmann::json::array({b.x, b.y, b.w, b.h}); };
  auto dump = [&](const char* split, const LabeledDataset& set) {
    fs::create_directories(out / split);
    for (std::size_t i = 0; i < set.items.size(); ++i) {
      const LabeledImage& item = set.items[i];
      char name[32];
      std::snprintf(name, sizeof name, "%05zu.ppm", i);
      write_ppm_file((out / split / name).string(), item.image);
      nlohmann::json j;
      j["split"] = split;
      j["file"] = std::string(split) + "/" + name;
      j["fine"] = item.fine;
      j["superclass"] = item.superclass;
      j["object"] = box_json(item.object);
      j["parts"] = nlohmann::json::array({box_json(item.parts[0]), box_json(item.parts[1])});
      labels += j.dump() + "\n";
    }
  };
  dump("train", data.train);
  dump("val", data.val);
  dump("test", data.test);
  fs::create_directories(out / "background");
  for (std::size_t i = 0; i < data.background.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "%05zu.ppm", i);
    write_ppm_file((out / "background" / name).string(), data.background[i]);
  }
  write_text_file(out / "labels.jsonl", labels);
  log_line("wrote " + std::to_string(data.train.items.size() + data.val.items.size() + data.test.items.size()) +
           " labelled images to " + out.string());
}

void cmd_propose(const Options& o, const std::string& image) {
  const ExperimentConfig cfg = load_config(o);
  for (const Box& b : selective_search(read_ppm_file(image), cfg.proposals).boxes) std::cout << box_text(b) << '\n';
}

void cmd_select(const Options& o, const std::string& image, const std::string& model) {
  const ExperimentConfig cfg = load_config(o);
  const Network filternet = model.empty() ? need_net(work_dir(o), artifact::filternet, "train-filternet")
                                          : load_net_file(model);
  const Image img = read_ppm_file(image);
  const auto proposals = selective_search(img, cfg.proposals).boxes;
  for (const ScoredBox& s : select_patches(filternet, img, proposals, domain_parents(cfg), cfg.threshold,
                                           static_cast<std::size_t>(cfg.max_count))) {
    char buf[32];
    std::snprintf(buf, sizeof buf, " %.6f", s.score);
    std::cout << box_text(s.box) << buf << '\n';
  }
}

void cmd_detect(const Options& o, const std::string& image) {
  const ExperimentConfig cfg = load_config(o);
  const fs::path dir = work_dir(o);
  const Network domainnet = need_net(dir, artifact::domainnet, "train-domainnet");
  const PartDetectorBank bank = need_bank(dir);
  const Image img = read_ppm_file(image);
  std::vector<Box> candidates;
  for (const Box& b : selective_search(img, cfg.proposals).boxes)
    if (b.area() >= kMinProposalArea) candidates.push_back(b);
  for (const GroupDetection& d : detect_parts(domainnet, bank, img, candidates)) {
    char buf[32];
    std::snprintf(buf, sizeof buf, " %.6f", d.score);
    std::cout << d.group << ' ' << box_text(d.box) << buf << '\n';
  }
}

void cmd_train_filternet(const Options& o) {
  const Experiment exp = prepare_experiment(load_config(o), resolve_seed(o));
  const fs::path dir = work_dir(o);
  const TrainResult r = train_filternet(exp, epoch_logger("filternet"));
  save_net_file((dir / artifact::filternet).string(), r.network);
  save_losses(dir, "filternet", r.epoch_losses);
}

void cmd_train_domainnet(const Options& o) {
  const Experiment exp = prepare_experiment(load_config(o), resolve_seed(o));
  const fs::path dir = work_dir(o);
  const Network filternet = need_net(dir, artifact::filternet, "train-filternet");
  const auto selection = select_all(exp, filternet, exp.train);
  const TrainResult r = train_domainnet(exp, selection, epoch_logger("domainnet"));
  save_net_file((dir / artifact::domainnet).string(), r.network);
  save_losses(dir, "domainnet", r.epoch_losses);
}

void cmd_build_parts(const Options& o) {
  const Experiment exp = prepare_experiment(load_config(o), resolve_seed(o));
  const fs::path dir = work_dir(o);
  const PartBankResult r = build_parts(exp, need_net(dir, artifact::domainnet, "train-domainnet"));
  write_text_file(dir / artifact::bank, r.bank.to_text());
  std::cout << r.bank.to_text();
}

void cmd_train_svm(const Options& o) {
  const Experiment exp = prepare_experiment(load_config(o), resolve_seed(o));
  const fs::path dir = work_dir(o);
  const SvmTrainResult r =
      train_part_svm(exp, need_net(dir, artifact::domainnet, "train-domainnet"), need_bank(dir));
  save_svm_file((dir / artifact::part_svm).string(), r.model);
  const std::string text = epoch_series_jsonl(r.objectives, "objective");
  write_text_file(dir / "svm_objectives.jsonl", text);
  std::cout << text;
}

void cmd_evaluate(const Options& o) {
  const Experiment exp = prepare_experiment(load_config(o), resolve_seed(o));
  const fs::path dir = work_dir(o);
  Models m;
  m.filternet = need_net(dir, artifact::filternet, "train-filternet");
  m.domainnet = need_net(dir, artifact::domainnet, "train-domainnet");
  m.bank = need_bank(dir);
  const fs::path svm = dir / artifact::part_svm;
  if (!fs::exists(svm)) throw Error(svm.string() + " is missing; run 'train-svm' first");
  m.part_svm = load_svm_file(svm.string());
  // The whole-image baselines have no verb of their own; train them once.
  auto baseline = [&](const char* file, const char* stem, auto&& trainer) {
    const fs::path p = dir / file;
    if (fs::exists(p)) return load_net_file(p.string());
    log_line(std::string("training baseline ") + stem);
    const TrainResult r = trainer(exp, epoch_logger(stem));
    save_net_file(p.string(), r.network);
    write_text_file(dir / (std::string(stem) + "_losses.jsonl"), epoch_series_jsonl(r.epoch_losses));
    return r.network;
  };
  m.baseline_domain = baseline(artifact::baseline_domain, "cnn_domain", train_baseline_domain);
  m.baseline_multitask = baseline(artifact::baseline_multitask, "cnn_multitask", train_baseline_multitask);
  const Evaluation ev = evaluate_methods(exp, m);
  const std::string report = report_jsonl(ev.records);
  write_text_file(dir / artifact::report, report);
  std::cout << render_report(report);
}

void cmd_run_all(const Options& o) {
  const PipelineResult r = run_pipeline(load_config(o), resolve_seed(o), work_dir(o), log_line);
  std::cout << render_report(report_jsonl(r.evaluation.records));
  char buf[160];
  std::snprintf(buf, sizeof buf, "alpha %.2f, noise group %d, part localisation %.3f", r.evaluation.fusion.alpha,
                r.models.bank.noise_group.value_or(-1), r.evaluation.part_localization);
  log_line(buf);
}

int cmd_selfcheck(const Options& o) {
  bool ok = true;
  for (const auto& line : tools::run_selfcheck(resolve_seed(o))) {
    std::cout << (line.passed ? "PASS " : "FAIL ") << line.name << ": " << line.detail << '\n';
    ok = ok && line.passed;
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  configure_allocator();
  CLI::App app{"Fine-grained classification with object and part attention on a synthetic benchmark"};
  app.require_subcommand(1);
  Options o;
  std::uint64_t seed = 0;
  app.add_option("--config", o.config_path, "key = value configuration file")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed, "master seed (default: $TLA_SEED, then 1)");
  app.add_option("--work", o.work, "directory holding models, banks and reports")->capture_default_str();

  std::string out, image, model, report;
  auto* gen = app.add_subcommand("gen-data", "write the synthetic benchmark as PPM files plus labels.jsonl");
  gen->add_option("--out", out, "output directory (default: <work>/data)");
  auto* propose = app.add_subcommand("propose", "print 'x y w h' for every bottom-up proposal of an image");
  propose->add_option("image", image, "PPM/PGM file")->required()->check(CLI::ExistingFile);
  auto* select = app.add_subcommand("select", "print 'x y w h score' for every FilterNet-selected patch");
  select->add_option("image", image, "PPM/PGM file")->required()->check(CLI::ExistingFile);
  select->add_option("--filternet", model, "FilterNet model (default: <work>/filternet.tlan)");
  auto* detect = app.add_subcommand("detect", "print 'group x y w h score' for every part group");
  detect->add_option("image", image, "PPM/PGM file")->required()->check(CLI::ExistingFile);
  auto* tf = app.add_subcommand("train-filternet", "train the superclass/background FilterNet");
  auto* td = app.add_subcommand("train-domainnet", "train the DomainNet on selected patches");
  auto* bp = app.add_subcommand("build-parts", "cluster part-layer filters and mark the noise group");
  auto* ts = app.add_subcommand("train-svm", "train the part-feature SVM");
  auto* ev = app.add_subcommand("evaluate", "evaluate the five methods and write report.jsonl");
  auto* all = app.add_subcommand("run-all", "run every stage and write all artifacts");
  auto* sc = app.add_subcommand("selfcheck", "run the numeric oracle checks");
  auto* rep = app.add_subcommand("report", "render a report.jsonl file as a table");
  rep->add_option("file", report, "report file")->required()->check(CLI::ExistingFile);
  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  if (seed_opt->count() > 0) o.seed = seed;

  try {
    if (*gen) cmd_gen_data(o, out);
    else if (*propose) cmd_propose(o, image);
    else if (*select) cmd_select(o, image, model);
    else if (*detect) cmd_detect(o, image);
    else if (*tf) cmd_train_filternet(o);
    else if (*td) cmd_train_domainnet(o);
    else if (*bp) cmd_build_parts(o);
    else if (*ts) cmd_train_svm(o);
    else if (*ev) cmd_evaluate(o);
    else if (*all) cmd_run_all(o);
    else if (*sc) return cmd_selfcheck(o);
    else if (*rep) std::cout << render_report(read_text_file(report));
  } catch (const std::exception& e) {
    std::cerr << "tla: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
