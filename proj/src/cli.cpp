#include "token2vec/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "token2vec/analysis.hpp"
#include "token2vec/config.hpp"
#include "token2vec/corpus_io.hpp"
#include "token2vec/detail/binary_io.hpp"
#include "token2vec/errors.hpp"
#include "token2vec/features.hpp"
#include "token2vec/model.hpp"
#include "token2vec/rng.hpp"
#include "token2vec/speech_tokenizer.hpp"
#include "token2vec/text_tokenizer.hpp"
#include "token2vec/trainer.hpp"

namespace token2vec::cli {

namespace fs = std::filesystem;

namespace {

// Raised for input problems detected by the CLI itself.
class UsageError : public Error {
 public:
  using Error::Error;
};

std::string checkpoint_stem(std::uint64_t step) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "checkpoint_%08llu", static_cast<unsigned long long>(step));
  return buf;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw UsageError("cannot create directory " + dir + ": " + ec.message());
}

std::vector<std::string> split_words(const std::string& s) {
  std::istringstream is(s);
  std::vector<std::string> out;
  std::string w;
  while (is >> w) out.push_back(w);
  return out;
}

// --- extract-features ------------------------------------------------------

struct ExtractArgs {
  std::string wav_dir, out_dir;
  std::size_t n_mels = 80;
  double frame_ms = 25.0, hop_ms = 20.0;
};

int cmd_extract(const ExtractArgs& a) {
  if (!fs::is_directory(a.wav_dir)) throw UsageError("--wav-dir " + a.wav_dir + " is not a directory");
  std::vector<fs::path> wavs;
  for (const auto& e : fs::directory_iterator(a.wav_dir)) {
    if (e.is_regular_file() && e.path().extension() == ".wav") wavs.push_back(e.path());
  }
  std::sort(wavs.begin(), wavs.end());
  if (wavs.empty()) {
    std::cerr << "no input files\n";
    return kExitUsage;
  }
  ensure_dir(a.out_dir);
  LogmelConfig lc;
  lc.n_mels = a.n_mels;
  lc.frame_ms = a.frame_ms;
  lc.hop_ms = a.hop_ms;

  RunConfig rc;
  rc.set("features.n_mels", std::to_string(a.n_mels));
  rc.set("features.frame_ms", nlohmann::json(a.frame_ms).dump());
  rc.set("features.hop_ms", nlohmann::json(a.hop_ms).dump());
  rc.set("features.sample_rate", std::to_string(lc.sample_rate));
  rc.save((fs::path(a.out_dir) / "run_config.txt").string());

  Manifest manifest;
  std::vector<std::string> failures;
  for (const auto& wav : wavs) {
    const std::string id = wav.stem().string();
    try {
      const Waveform w = read_wav(wav.string());
      LogmelResult r = logmel_extract(w.samples, w.sample_rate, lc);
      if (r.too_short) std::cerr << "warning: " << wav.string() << " is shorter than one frame\n";
      r.features.id = id;
      const std::string name = id + ".tv2f";
      write_feature_file((fs::path(a.out_dir) / name).string(), r.features);
      manifest.entries.push_back({id, name, r.features.num_frames()});
    } catch (const Error& e) {
      failures.push_back(wav.string() + ": " + e.what());
    }
  }
  write_manifest((fs::path(a.out_dir) / "manifest.jsonl").string(), manifest);
  if (!failures.empty()) {
    for (const auto& f : failures) std::cerr << "error: " << f << "\n";
    return kExitUsage;
  }
  return kExitOk;
}

// --- train-codebook --------------------------------------------------------

struct CodebookArgs {
  std::string manifest, out;
  KMeansConfig kmeans;
  std::size_t stride = 1;
};

std::vector<FeatureMatrix> load_manifest_features(const std::string& path) {
  const Manifest m = read_manifest(path);
  validate_manifest(m);
  std::vector<FeatureMatrix> feats;
  for (const auto& e : m.entries) {
    FeatureMatrix f = read_feature_file(e.path);
    f.id = e.id;
    feats.push_back(std::move(f));
  }
  return feats;
}

int cmd_train_codebook(const CodebookArgs& a) {
  const auto feats = load_manifest_features(a.manifest);
  const Tensor pooled = pool_frames(feats, a.stride);
  if (pooled.shape()[0] < a.kmeans.k) {
    std::cerr << "error: --k " << a.kmeans.k << " exceeds the " << pooled.shape()[0]
              << " available frames (after stride " << a.stride << ")\n";
    return kExitUsage;
  }
  const Codebook cb = kmeans_train(pooled, a.kmeans);
  write_codebook(a.out, cb);
  std::cerr << "k-means: " << cb.iterations << " iterations, inertia " << cb.inertia << "\n";
  return kExitOk;
}

// --- tokenize-speech -------------------------------------------------------

struct SpeechArgs {
  std::string manifest, codebook, corpus, out;
  bool reduce = false;
};

int cmd_tokenize_speech(const SpeechArgs& a) {
  std::vector<TokenSequence> corpus;
  if (!a.corpus.empty()) {
    corpus = read_token_corpus(a.corpus);
    for (const auto& s : corpus) {
      if (s.modality != Modality::kSpeech) throw UsageError("--corpus holds non-speech utterance " + s.id);
    }
  } else {
    if (a.manifest.empty() || a.codebook.empty()) throw UsageError("need --manifest and --codebook, or --corpus");
    const Codebook cb = read_codebook(a.codebook);
    for (const auto& f : load_manifest_features(a.manifest)) corpus.push_back(kmeans_assign(cb, f));
  }
  if (a.reduce) {
    for (auto& s : corpus) s = run_length_reduce(s);
  }
  write_token_corpus(a.out, corpus);
  return kExitOk;
}

// --- tokenize-text ---------------------------------------------------------

struct TextArgs {
  std::string text, lexicon, vocab, vocab_out, out, stats, upsample = "original";
  double mean_repeat = 4.0;
  std::uint64_t seed = 0;
};

int cmd_tokenize_text(const TextArgs& a) {
  const Lexicon lex = parse_lexicon(a.lexicon);
  if (lex.duplicate_warnings) std::cerr << "warning: " << lex.duplicate_warnings << " duplicate lexicon entries ignored\n";
  const PhonemeVocab vocab = a.vocab.empty() ? build_phoneme_vocab(lex) : read_phoneme_vocab(a.vocab);
  if (!a.vocab_out.empty()) write_phoneme_vocab(a.vocab_out, vocab);

  UpsampleConfig up;
  if (a.upsample == "repeat") up.mode = UpsampleMode::kRepeat;
  else if (a.upsample == "original") up.mode = UpsampleMode::kOriginal;
  else throw UsageError("--upsample must be repeat or original");
  up.geometric_mean = a.mean_repeat;
  up.seed = a.seed;
  if (!a.stats.empty()) up.stats = read_duration_stats(a.stats);

  std::istringstream in(detail::read_file_text(a.text));
  std::vector<TokenSequence> corpus;
  std::string line;
  std::size_t lineno = 0, oov = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::string id, words = line;
    if (const auto tab = line.find('\t'); tab != std::string::npos) {
      id = line.substr(0, tab);
      words = line.substr(tab + 1);
    } else {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "text-%08zu", lineno);
      id = buf;
    }
    PhonemizeResult r = words_to_phonemes(split_words(words), lex, vocab, id);
    oov += r.oov_words;
    corpus.push_back(upsample(r.tokens, up, &vocab));
  }
  if (oov) std::cerr << "warning: " << oov << " out-of-vocabulary words dropped\n";
  write_token_corpus(a.out, corpus);
  return kExitOk;
}

// --- estimate-durations ----------------------------------------------------

struct DurationArgs {
  std::string speech_corpus, alignments, out;
};

int cmd_estimate_durations(const DurationArgs& a) {
  DurationStats stats;
  if (!a.speech_corpus.empty()) stats = estimate_duration_stats(read_token_corpus(a.speech_corpus));
  else if (!a.alignments.empty()) stats = estimate_duration_stats_aligned(read_aligned_durations(a.alignments));
  else throw UsageError("need --speech-corpus or --alignments");
  write_duration_stats(a.out, stats);
  std::cerr << "mean repeat " << stats.fallback.mean() << "\n";
  return kExitOk;
}

// --- pretrain --------------------------------------------------------------

struct PretrainArgs {
  std::string speech_corpus, text_corpus, text_vocab, preset = "desk", config_file, out_dir;
  std::vector<std::string> overrides;
  std::size_t speech_vocab = 0;
  std::optional<std::size_t> text_ratio, steps;
  std::optional<std::uint64_t> seed;
  std::size_t stop_at = 0;
  bool resume = false;
};

std::size_t infer_vocab(const std::vector<TokenSequence>& corpus) {
  std::int64_t mx = -1;
  for (const auto& s : corpus)
    for (auto id : s.ids) mx = std::max(mx, id);
  return static_cast<std::size_t>(mx + 1);
}

void truncate_metrics(const std::string& path, std::uint64_t last_step) {
  if (!fs::exists(path)) return;
  std::istringstream in(detail::read_file_text(path));
  std::string kept, line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    if (j.at("step").get<std::uint64_t>() <= last_step) kept += line + "\n";
  }
  detail::write_file_text(path, kept);
}

int cmd_pretrain(const PretrainArgs& a) {
  ensure_dir(a.out_dir);
  const fs::path out(a.out_dir);
  const std::string config_path = (out / "run_config.txt").string();
  RunConfig rc;
  if (a.resume) {
    if (!fs::exists(config_path)) throw UsageError("--resume: no run_config.txt in " + a.out_dir);
    rc = RunConfig::load(config_path);
  } else {
    rc = RunConfig::preset(a.preset);
    if (!a.config_file.empty()) rc.merge(RunConfig::load(a.config_file));
    if (a.text_ratio) rc.set("train.text_ratio", std::to_string(*a.text_ratio));
    if (a.steps) rc.set("train.total_steps", std::to_string(*a.steps));
    if (a.seed) rc.set("run.seed", std::to_string(*a.seed));
    for (const auto& o : a.overrides) rc.set_assignment(o);
    if (!a.speech_corpus.empty()) rc.set("data.speech_corpus", fs::absolute(a.speech_corpus).string());
    if (!a.text_corpus.empty()) rc.set("data.text_corpus", fs::absolute(a.text_corpus).string());
    if (!a.text_vocab.empty()) rc.set("data.text_vocab", fs::absolute(a.text_vocab).string());
  }
  const auto load_corpus = [&](const char* key, Modality m) {
    std::vector<TokenSequence> c;
    if (rc.has(key) && !rc.get_string(key).empty()) c = read_token_corpus(rc.get_string(key));
    for (const auto& s : c) {
      if (s.modality != m) throw UsageError(std::string(key) + " holds a " + std::string(modality_name(s.modality)) +
                                            " utterance (" + s.id + ")");
    }
    return c;
  };
  auto speech = load_corpus("data.speech_corpus", Modality::kSpeech);
  auto text = load_corpus("data.text_corpus", Modality::kText);
  std::optional<PhonemeVocab> vocab;
  if (rc.has("data.text_vocab") && !rc.get_string("data.text_vocab").empty()) {
    vocab = read_phoneme_vocab(rc.get_string("data.text_vocab"));
  }
  if (!a.resume) {
    if (a.speech_vocab > 0) rc.set("model.speech_vocab", std::to_string(a.speech_vocab));
    else if (!speech.empty()) rc.set("model.speech_vocab", std::to_string(infer_vocab(speech)));
    if (vocab) rc.set("model.text_vocab", std::to_string(vocab->size()));
    else if (!text.empty()) rc.set("model.text_vocab", std::to_string(infer_vocab(text)));
  }
  const ModelConfig mc = model_config_from(rc);
  TrainConfig tc = train_config_from(rc);
  if (!a.resume) rc.save(config_path);

  JointModel model(mc, derive_seed(tc.seed, "model"));
  Trainer trainer(model, tc, std::move(speech), std::move(text), vocab ? &*vocab : nullptr);
  const std::string metrics_path = (out / "metrics.jsonl").string();

  if (a.resume) {
    std::uint64_t latest = 0;
    bool found = false;
    for (const auto& e : fs::directory_iterator(out)) {
      const std::string name = e.path().filename().string();
      if (e.path().extension() == ".tv2s" && name.rfind("checkpoint_", 0) == 0) {
        const auto step = std::stoull(name.substr(11, 8));
        if (!found || step > latest) latest = step;
        found = true;
      }
    }
    if (!found) throw UsageError("--resume: no optimizer state in " + a.out_dir);
    trainer.load_state((out / (checkpoint_stem(latest) + ".tv2s")).string());
    truncate_metrics(metrics_path, latest);
    std::cerr << "resumed at step " << latest << "\n";
  } else {
    detail::write_file_text(metrics_path, "");
    save_model((out / (checkpoint_stem(0) + ".tv2m")).string(), model, 0);
    trainer.save_state((out / (checkpoint_stem(0) + ".tv2s")).string());
  }

  std::ofstream metrics(metrics_path, std::ios::app);
  auto checkpoint = [&](std::size_t step) {
    metrics.flush();
    save_model((out / (checkpoint_stem(step) + ".tv2m")).string(), model, step);
    trainer.save_state((out / (checkpoint_stem(step) + ".tv2s")).string());
  };
  const std::size_t until = a.stop_at > 0 ? std::min(a.stop_at, tc.total_steps) : tc.total_steps;
  trainer.run(
      until,
      [&](const StepRecord& r) {
        metrics << format_metrics_line(r) << "\n";
        if (r.step % 500 == 0) {
          std::cerr << "step " << r.step << " " << modality_name(r.modality) << " loss " << r.loss << " acc "
                    << r.masked_acc << "\n";
        }
      },
      checkpoint);
  metrics.flush();
  if (tc.checkpoint_interval == 0 || trainer.step() % tc.checkpoint_interval != 0) checkpoint(trainer.step());
  return kExitOk;
}

// --- analyze ---------------------------------------------------------------

struct AnalyzeArgs {
  std::vector<std::string> checkpoints;
  std::string out_dir, method = "pca";
  std::size_t k = 10;
  std::uint64_t seed = 0;
  bool csv = false;
};

int cmd_analyze(const AnalyzeArgs& a) {
  for (const auto& c : a.checkpoints) {
    if (!fs::exists(c)) {
      std::cerr << "error: checkpoint " << c << " does not exist\n";
      return kExitUsage;
    }
  }
  ensure_dir(a.out_dir);
  ProjectionConfig pc;
  if (a.method == "pca") pc.method = ProjectionMethod::kPca;
  else if (a.method == "tsne") pc.method = ProjectionMethod::kTsne;
  else throw UsageError("--method must be pca or tsne");
  pc.seed = a.seed;
  RunConfig rc;
  rc.set("analysis.k", std::to_string(a.k));
  rc.set("analysis.method", a.method);
  rc.set("analysis.seed", std::to_string(a.seed));
  rc.save((fs::path(a.out_dir) / "run_config.txt").string());
  for (const auto& c : a.checkpoints) {
    std::uint64_t step = 0;
    const JointModel model = load_model(c, &step);
    const OverlapReport report = analyze_embeddings(model, step, a.k, pc);
    const std::string stem = fs::path(c).stem().string();
    detail::write_file_text((fs::path(a.out_dir) / ("report_" + stem + ".json")).string(), report_to_json(report));
    if (a.csv) detail::write_file_text((fs::path(a.out_dir) / ("points_" + stem + ".csv")).string(), report_to_csv(report));
    std::cout << stem << " step " << step << " mixing_rate " << report.mixing_rate << "\n";
  }
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"token2vec: joint speech/text pre-training on discrete tokens"};
  app.require_subcommand(1);

  ExtractArgs ex;
  auto* extract = app.add_subcommand("extract-features", "WAV directory -> log-mel feature files + manifest");
  extract->add_option("--wav-dir", ex.wav_dir)->required();
  extract->add_option("--out-dir", ex.out_dir)->required();
  extract->add_option("--n-mels", ex.n_mels);
  extract->add_option("--frame-ms", ex.frame_ms);
  extract->add_option("--hop-ms", ex.hop_ms);

  CodebookArgs cb;
  auto* codebook = app.add_subcommand("train-codebook", "k-means codebook over manifest features");
  codebook->add_option("--manifest", cb.manifest)->required();
  codebook->add_option("--out", cb.out)->required();
  codebook->add_option("--k", cb.kmeans.k);
  codebook->add_option("--stride", cb.stride);
  codebook->add_option("--seed", cb.kmeans.seed);
  codebook->add_option("--max-iters", cb.kmeans.max_iters);
  codebook->add_option("--tol", cb.kmeans.tol);

  SpeechArgs sp;
  auto* speech = app.add_subcommand("tokenize-speech", "features -> speech token corpus");
  speech->add_option("--manifest", sp.manifest);
  speech->add_option("--codebook", sp.codebook);
  speech->add_option("--corpus", sp.corpus, "existing speech token corpus to transform");
  speech->add_option("--out", sp.out)->required();
  speech->add_flag("--reduce", sp.reduce, "collapse runs of repeated tokens");

  TextArgs tx;
  auto* text = app.add_subcommand("tokenize-text", "sentences -> positional phoneme token corpus");
  text->add_option("--text", tx.text)->required();
  text->add_option("--lexicon", tx.lexicon)->required();
  text->add_option("--vocab", tx.vocab, "existing phoneme vocabulary");
  text->add_option("--vocab-out", tx.vocab_out);
  text->add_option("--out", tx.out)->required();
  text->add_option("--upsample", tx.upsample, "repeat | original");
  text->add_option("--stats", tx.stats, "duration stats TSV");
  text->add_option("--mean-repeat", tx.mean_repeat, "geometric fallback mean");
  text->add_option("--seed", tx.seed);

  DurationArgs du;
  auto* dur = app.add_subcommand("estimate-durations", "repeat-count statistics for text up-sampling");
  dur->add_option("--speech-corpus", du.speech_corpus, "unreduced speech tokens (run-length histogram)");
  dur->add_option("--alignments", du.alignments, "PHONEME<TAB>counts lines");
  dur->add_option("--out", du.out)->required();

  PretrainArgs pt;
  auto* pre = app.add_subcommand("pretrain", "joint masked-token pre-training");
  pre->add_option("--speech-corpus", pt.speech_corpus);
  pre->add_option("--text-corpus", pt.text_corpus);
  pre->add_option("--text-vocab", pt.text_vocab);
  pre->add_option("--speech-vocab-size", pt.speech_vocab, "codebook size (default: inferred)");
  pre->add_option("--text-ratio", pt.text_ratio, "text steps per speech_ratio speech steps; 0 = speech only");
  pre->add_option("--steps", pt.steps);
  pre->add_option("--seed", pt.seed);
  pre->add_option("--preset", pt.preset, "desk | small | paper");
  pre->add_option("--config", pt.config_file, "key=value config file");
  pre->add_option("--set", pt.overrides, "override, e.g. train.peak_lr=1e-3");
  pre->add_option("--stop-at", pt.stop_at, "stop after this step (resume later with --resume)");
  pre->add_option("--out-dir", pt.out_dir)->required();
  pre->add_flag("--resume", pt.resume);

  AnalyzeArgs an;
  auto* analyze = app.add_subcommand("analyze", "speech/text embedding overlap reports");
  analyze->add_option("--checkpoints", an.checkpoints)->required();
  analyze->add_option("--out-dir", an.out_dir)->required();
  analyze->add_option("--k", an.k);
  analyze->add_option("--method", an.method, "pca | tsne");
  analyze->add_option("--seed", an.seed);
  analyze->add_flag("--csv", an.csv);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*extract) return cmd_extract(ex);
    if (*codebook) return cmd_train_codebook(cb);
    if (*speech) return cmd_tokenize_speech(sp);
    if (*text) return cmd_tokenize_text(tx);
    if (*dur) return cmd_estimate_durations(du);
    if (*pre) return cmd_pretrain(pt);
    if (*analyze) return cmd_analyze(an);
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInternal;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitUsage;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args);
}

}  // namespace token2vec::cli
