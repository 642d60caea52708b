// SPDX-License-Identifier: Apache-2.0
//
// Batch pipeline driver: extract twin graphs, train/evaluate the classifier,
// export DOT renderings, and generate the synthetic desk-scale dataset.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "bingo/encoder.hpp"
#include "bingo/pipeline.hpp"

namespace fs = std::filesystem;
using namespace bingo;
using Json = nlohmann::ordered_json;

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << data;
}

// Changed-lines file: one "pre <int>" or "post <int>" per line.
void read_changed_lines(const fs::path& path, std::set<int>& pre,
                        std::set<int>& post) {
  std::istringstream in(read_file(path));
  std::string side;
  int line;
  while (in >> side >> line) {
    if (side == "pre")
      pre.insert(line);
    else if (side == "post")
      post.insert(line);
    else
      throw std::runtime_error("changed-lines file: bad side '" + side + "'");
  }
}

struct EmbedderChoice {
  std::string spec = "hashed";

  Embedder build() const {
    if (spec == "hashed") return hashed_embedder();
    if (spec.rfind("encoder:", 0) == 0) {
      const std::string path = spec.substr(8);
      auto params = std::make_shared<EncoderParams>(
          load_encoder(read_file(path)));
      auto vocab = std::make_shared<Vocabulary>(
          Vocabulary::from_text(read_file(path + ".vocab")));
      return [params, vocab](const BasicBlock& b) {
        return encode_block(params->cfg, *params, b, *vocab);
      };
    }
    throw std::runtime_error("unknown embedder '" + spec +
                             "' (expected hashed or encoder:PATH)");
  }
};

GraphBatch load_samples(const DatasetManifest& manifest,
                        const std::vector<ManifestEntry>& entries,
                        const fs::path& manifest_dir, const Embedder& embed) {
  (void)manifest;
  GraphBatch batch;
  for (const auto& e : entries) {
    fs::path p = e.path;
    if (p.is_relative()) p = manifest_dir / p;
    TwinGraph twin = twin_from_json(read_file(p));
    if (e.label) twin.label = e.label;
    batch.push_back(twin_to_sample(twin, embed));
  }
  return batch;
}

Json metrics_json(const Metrics& m) {
  auto opt = [](const std::optional<double>& v) {
    return v ? Json(*v) : Json(nullptr);
  };
  return Json{{"accuracy", opt(m.accuracy)},
              {"f1", opt(m.f1)},
              {"fnr", opt(m.fnr)},
              {"fpr", opt(m.fpr)},
              {"confusion",
               {{"tp", m.tp}, {"fn", m.fn}, {"fp", m.fp}, {"tn", m.tn}}}};
}

int cmd_extract(const std::string& pre_path, const std::string& post_path,
                const std::string& changed_lines_path, bool use_diff,
                const std::string& label_str, const std::string& commit,
                const std::string& out_dir, const SliceConfig& slice_cfg) {
  Program pre = parse_program(read_file(pre_path));
  Program post = parse_program(read_file(post_path));
  pre.side = Side::PrePatch;
  post.side = Side::PostPatch;
  pre.commit_id = post.commit_id = commit;

  PatchBlockSet pbs;
  if (use_diff) {
    pbs = patch_blocks_by_diff(pre, post);
  } else {
    std::set<int> pre_lines, post_lines;
    read_changed_lines(changed_lines_path, pre_lines, post_lines);
    pbs = patch_blocks_from_debug(pre, post, pre_lines, post_lines);
  }
  if (pbs.empty()) {
    std::cerr << "warning: no patch blocks found; nothing to emit\n";
    return 0;
  }

  std::optional<TwinLabel> label;
  if (label_str == "security") label = TwinLabel::Security;
  else if (label_str == "non_security") label = TwinLabel::NonSecurity;
  else if (!label_str.empty())
    throw std::runtime_error("unknown label '" + label_str + "'");

  TwinBuildResult built = build_twin_graph(pre, post, pbs, slice_cfg, label);
  fs::create_directories(out_dir);
  for (const auto& twin : built.twins) {
    const fs::path out = fs::path(out_dir) /
                         (commit + "_" + twin.function + ".twin.json");
    write_file(out, twin_to_json(twin));
    std::cout << out.string() << "\n";
  }
  for (const auto& w : built.warnings) std::cerr << "warning: " << w << "\n";
  return built.warnings.empty() ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bingo: binary patch twin-graph extraction and classification"};
  app.require_subcommand(1);

  SliceConfig slice_cfg;
  EmbedderChoice embedder;
  TrainConfig train_cfg;
  double split_ratio = 0.8;
  std::uint64_t seed = 0;

  auto add_slice_flags = [&](CLI::App* cmd) {
    cmd->add_option("--slice-stride", slice_cfg.stride_n, "slice stride n")
        ->default_val(2);
    cmd->add_option("--time-limit-s", slice_cfg.time_limit_seconds,
                    "slicing time limit, seconds")
        ->default_val(900);
  };

  // extract
  std::string pre_path, post_path, changed_lines, label_str, commit = "commit";
  std::string out_dir = ".";
  bool use_diff = false;
  auto* extract = app.add_subcommand(
      "extract", "build twin graphs from a pre/post assembly pair");
  extract->add_option("pre", pre_path, "pre-patch .asm")->required();
  extract->add_option("post", post_path, "post-patch .asm")->required();
  extract->add_option("--changed-lines", changed_lines,
                      "file of 'pre N' / 'post N' changed source lines");
  extract->add_flag("--diff", use_diff,
                    "use fingerprint diffing instead of debug lines");
  extract->add_option("--label", label_str, "security|non_security");
  extract->add_option("--commit", commit, "commit id for the pair");
  extract->add_option("--out-dir", out_dir, "output directory");
  add_slice_flags(extract);

  // train
  std::string manifest_path, checkpoint_path = "model.bingo-gnn",
              history_path = "history.json";
  auto* train_cmd = app.add_subcommand("train", "train the siamese classifier");
  train_cmd->add_option("manifest", manifest_path, "dataset manifest JSON")
      ->required();
  train_cmd->add_option("--out-checkpoint", checkpoint_path, "model output");
  train_cmd->add_option("--history", history_path, "history JSON output");
  train_cmd->add_option("--epochs", train_cfg.max_epochs)->default_val(50);
  train_cmd->add_option("--batch", train_cfg.batch_size)->default_val(128);
  train_cmd->add_option("--lr", train_cfg.lr)->default_val(0.001);
  train_cmd->add_option("--split", split_ratio)->default_val(0.8);
  train_cmd->add_option("--seed", seed)->default_val(0);
  train_cmd->add_option("--embedder", embedder.spec,
                        "hashed | encoder:PATH");

  // eval
  std::string eval_checkpoint, metrics_out;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  eval_cmd->add_option("checkpoint", eval_checkpoint)->required();
  eval_cmd->add_option("manifest", manifest_path)->required();
  eval_cmd->add_option("--out", metrics_out, "metrics JSON path (default stdout)");
  eval_cmd->add_option("--embedder", embedder.spec, "hashed | encoder:PATH");

  // export-dot
  std::string twin_path, dot_prefix;
  auto* dot_cmd = app.add_subcommand("export-dot",
                                     "render a twin graph as Graphviz DOT");
  dot_cmd->add_option("twin", twin_path, "twin-graph JSON")->required();
  dot_cmd->add_option("--out-prefix", dot_prefix,
                      "output prefix (default: twin path)");

  // gen-synthetic
  int synth_count = 400;
  std::string synth_dir = "synthetic";
  auto* synth_cmd = app.add_subcommand(
      "gen-synthetic", "generate a labeled synthetic twin-graph dataset");
  synth_cmd->add_option("--count", synth_count)->default_val(400);
  synth_cmd->add_option("--seed", seed)->default_val(7);
  synth_cmd->add_option("--out-dir", synth_dir);
  add_slice_flags(synth_cmd);

  // pretrain (encoder path)
  std::vector<std::string> asm_paths;
  std::string enc_out = "encoder.bingo-enc";
  int pretrain_steps = 500;
  double pretrain_lr = 1e-3;
  int enc_layers = 2, enc_heads = 4, enc_dim = kEmbedDim;
  auto* pre_cmd = app.add_subcommand(
      "pretrain", "pretrain the token encoder on assembly files (MLM)");
  pre_cmd->add_option("asm", asm_paths, "assembly files")->required();
  pre_cmd->add_option("--steps", pretrain_steps)->default_val(500);
  pre_cmd->add_option("--lr", pretrain_lr)->default_val(1e-3);
  pre_cmd->add_option("--seed", seed)->default_val(0);
  pre_cmd->add_option("--layers", enc_layers)->default_val(2);
  pre_cmd->add_option("--heads", enc_heads)->default_val(4);
  pre_cmd->add_option("--dim", enc_dim)->default_val(kEmbedDim);
  pre_cmd->add_option("--out", enc_out, "checkpoint output path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (extract->parsed()) {
      if (use_diff == !changed_lines.empty()) {
        std::cerr << "error: pass exactly one of --diff / --changed-lines\n";
        return 1;
      }
      return cmd_extract(pre_path, post_path, changed_lines, use_diff,
                         label_str, commit, out_dir, slice_cfg);
    }

    if (train_cmd->parsed()) {
      if (split_ratio <= 0.0 || split_ratio >= 1.0)
        throw std::runtime_error("--split must be in (0,1)");
      DatasetManifest manifest =
          manifest_from_json(read_file(manifest_path));
      manifest.split_ratio = split_ratio;
      manifest.seed = seed;
      auto [train_entries, test_entries] = split_dataset(manifest);
      const fs::path dir = fs::path(manifest_path).parent_path();
      const Embedder embed = embedder.build();
      GraphBatch train_set = load_samples(manifest, train_entries, dir, embed);
      GraphBatch test_set = load_samples(manifest, test_entries, dir, embed);

      train_cfg.seed = seed;
      Rng init_rng(seed);
      const int input_dim = static_cast<int>(train_set.front().pre.nodes.cols());
      ModelParams params = ModelParams::init(input_dim, init_rng);
      TrainHistory history = train(params, train_set, test_set, train_cfg);

      write_file(checkpoint_path,
                 save_gnn(params, input_dim, seed, train_cfg.max_epochs));
      Json hist = Json::array();
      for (const auto& e : history.epochs)
        hist.push_back({{"epoch", e.epoch},
                        {"train_loss", e.train_loss},
                        {"test_accuracy", e.test_accuracy}});
      const Metrics final_metrics = evaluate(params, test_set);
      Json out = {{"seed", seed},
                  {"train_size", train_entries.size()},
                  {"test_size", test_entries.size()},
                  {"epochs", hist},
                  {"final_test_metrics", metrics_json(final_metrics)}};
      write_file(history_path, out.dump(2) + "\n");
      std::cout << "final test accuracy: "
                << final_metrics.accuracy.value_or(0.0) << "\n";
      return 0;
    }

    if (eval_cmd->parsed()) {
      DatasetManifest manifest =
          manifest_from_json(read_file(manifest_path));
      ModelParams params = load_gnn(read_file(eval_checkpoint));
      const fs::path dir = fs::path(manifest_path).parent_path();
      GraphBatch batch =
          load_samples(manifest, manifest.entries, dir, embedder.build());
      const std::string text = metrics_json(evaluate(params, batch)).dump(2) + "\n";
      if (metrics_out.empty())
        std::cout << text;
      else
        write_file(metrics_out, text);
      return 0;
    }

    if (dot_cmd->parsed()) {
      const TwinGraph twin = twin_from_json(read_file(twin_path));
      const std::string prefix = dot_prefix.empty() ? twin_path : dot_prefix;
      write_file(prefix + ".pre.dot",
                 cpg_to_dot(twin.pre_graph, twin.function + "_pre"));
      write_file(prefix + ".post.dot",
                 cpg_to_dot(twin.post_graph, twin.function + "_post"));
      return 0;
    }

    if (synth_cmd->parsed()) {
      fs::create_directories(synth_dir);
      const auto twins = generate_synthetic_dataset(synth_count, seed, slice_cfg);
      DatasetManifest manifest;
      manifest.seed = seed;
      for (std::size_t i = 0; i < twins.size(); ++i) {
        const std::string name = twins[i].commit_id + ".twin.json";
        write_file(fs::path(synth_dir) / name, twin_to_json(twins[i]));
        ManifestEntry e;
        e.path = name;
        e.commit_id = twins[i].commit_id;
        e.label = *twins[i].label == TwinLabel::Security
                      ? TwinLabel::Security
                      : TwinLabel::NonSecurity;
        manifest.entries.push_back(e);
      }
      write_file(fs::path(synth_dir) / "manifest.json",
                 manifest_to_json(manifest));
      std::cout << "wrote " << twins.size() << " twin graphs to " << synth_dir
                << "\n";
      return 0;
    }

    if (pre_cmd->parsed()) {
      Vocabulary vocab;
      std::vector<BasicBlock> corpus;
      for (const auto& p : asm_paths) {
        const Program prog = parse_program(read_file(p));
        vocab.add_program(prog);
        for (const auto& f : prog.functions)
          for (const auto& b : f.blocks) corpus.push_back(b);
      }
      EncoderConfig cfg;
      cfg.layers = enc_layers;
      cfg.heads = enc_heads;
      cfg.embed_dim = enc_dim;
      cfg.vocab_size = vocab.size();
      Rng rng(seed);
      EncoderParams params = EncoderParams::init(cfg, rng);
      const PretrainStats stats =
          pretrain(params, vocab, corpus, pretrain_steps, pretrain_lr, rng);
      write_file(enc_out, save_encoder(params));
      write_file(enc_out + ".vocab", vocab.to_text());
      std::cout << "pretrained " << pretrain_steps << " steps; final loss "
                << (stats.step_losses.empty() ? 0.0 : stats.step_losses.back())
                << "\n";
      return 0;
    }
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
