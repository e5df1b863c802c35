#include "mhs/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <iterator>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "mhs/analysis.hpp"
#include "mhs/config.hpp"
#include "mhs/error.hpp"
#include "mhs/gradcheck.hpp"
#include "mhs/synthetic.hpp"
#include "mhs/text.hpp"
#include "mhs/train.hpp"

namespace mhs::cli {

namespace fs = std::filesystem;

namespace {

struct Streams {
  std::istream& in;
  std::ostream& out;
  std::ostream& err;
};

void require_file(const std::string& key, const std::string& path) {
  if (path.empty()) throw ConfigError("missing required setting '" + key + "'");
  if (!fs::is_regular_file(path))
    throw ConfigError(key + " file not found: " + path);
}

text::TokenizeOptions tokenize_options(const config::RunConfig& c) {
  return {c.comma_is_boundary};
}

std::vector<text::Document> encode_all(const text::Corpus& corpus,
                                       const text::Vocabulary& vocab,
                                       std::size_t num_classes) {
  std::vector<text::Document> docs;
  docs.reserve(corpus.records.size());
  for (const auto& r : corpus.records) {
    docs.push_back(vocab.encode(r.text, r.label));
    text::validate(docs.back(), num_classes);
  }
  return docs;
}

text::Corpus load_nonempty(const std::string& key, const std::string& path,
                           const config::RunConfig& c) {
  require_file(key, path);
  auto corpus = text::load_dataset(path, tokenize_options(c));
  if (corpus.records.empty())
    throw UsageError("no documents in " + path);
  return corpus;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir);
}

// Rejects explicitly configured model settings that disagree with a
// checkpoint.
void check_against(const config::RunConfig& c, const net::ModelConfig& m) {
  auto mismatch = [&](const char* key, const std::string& want,
                      const std::string& have) {
    if (c.explicit_keys.count(key) && want != have)
      throw ConfigError(std::string(key) + " is " + want +
                        " but the checkpoint has " + have);
  };
  mismatch("embed_dim", std::to_string(c.model.embed_dim),
           std::to_string(m.embed_dim));
  mismatch("hidden_dim", std::to_string(c.model.hidden_dim),
           std::to_string(m.hidden_dim));
  mismatch("num_classes", std::to_string(c.model.num_classes),
           std::to_string(m.num_classes));
  mismatch("variant", net::variant_name(c.model.variant),
           net::variant_name(m.variant));
}

train::Snapshot load_snapshot(const config::RunConfig& c) {
  require_file("checkpoint", c.checkpoint);
  auto snap = train::load_checkpoint(c.checkpoint);
  if (!snap.vocabulary)
    throw IntegrityError("checkpoint " + c.checkpoint + " has no vocabulary");
  check_against(c, snap.model.config());
  return snap;
}

std::string fixed(double v, int digits) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

// ------------------------------------------------------------ commands

int cmd_train(const config::RunConfig& cfg, Streams io) {
  config::RunConfig c = cfg;
  require_file("dataset", c.dataset);
  if (!c.embeddings.empty()) require_file("embeddings", c.embeddings);
  if (!c.test_dataset.empty()) require_file("test_dataset", c.test_dataset);
  if (!c.resume.empty()) require_file("resume", c.resume);
  ensure_dir(c.out_dir);

  const auto corpus = load_nonempty("dataset", c.dataset, c);
  std::vector<text::TokenizedText> texts;
  for (const auto& r : corpus.records) texts.push_back(r.text);

  std::optional<train::Snapshot> resumed;
  text::Vocabulary vocab;
  std::optional<text::EmbeddingTable> table;
  if (!c.resume.empty()) {
    resumed = train::load_checkpoint(c.resume);
    if (!resumed->vocabulary || !resumed->optimizer)
      throw IntegrityError("checkpoint " + c.resume +
                           " cannot be resumed (no vocabulary or optimizer)");
    check_against(c, resumed->model.config());
    vocab = *resumed->vocabulary;
  } else if (!c.embeddings.empty()) {
    const auto words = text::read_embedding_words(c.embeddings);
    vocab = text::Vocabulary::build(texts, &words);
    table = text::load_embeddings(c.embeddings, vocab, c.model.embed_dim,
                                  derive_seed(c.train.seed, 3));
  } else {
    vocab = text::Vocabulary::build(texts, nullptr);
  }
  c.model.vocab_size = vocab.size();

  const auto unk = text::unk_report(texts, vocab);
  io.out << "documents: " << corpus.records.size()
         << " (skipped " << corpus.skipped << ")\n"
         << "vocabulary: " << vocab.size() << '\n'
         << "unk rate: " << fixed(unk.unk_rate(), 4) << " (" << unk.unk
         << " of " << unk.total << " tokens)\n";

  const auto docs = encode_all(corpus, vocab, c.model.num_classes);
  const auto [train_docs, val_docs] =
      text::split_validation(docs, c.val_fraction, derive_seed(c.train.seed, 2));
  const ad::Tensor* embeddings = table ? &table->matrix : nullptr;

  if (!resumed && (!c.lr_grid.empty() || !c.slope_grid.empty())) {
    std::vector<double> lrs = c.lr_grid, slopes = c.slope_grid;
    if (lrs.empty()) lrs = {c.train.learning_rate};
    if (slopes.empty()) slopes = {c.model.slope};
    const auto grid = train::grid_search(c.model, embeddings, train_docs,
                                         val_docs, c.train, lrs, slopes,
                                         c.grid_epochs);
    io.out << "grid\tlearning_rate\tslope\tval_acc\tval_loss\n";
    for (const auto& p : grid.table)
      io.out << "grid\t" << p.learning_rate << '\t' << p.slope << '\t'
             << fixed(p.val_accuracy, 4) << '\t' << fixed(p.val_loss, 6)
             << '\n';
    io.out << "selected learning_rate=" << grid.best.learning_rate
           << " slope=" << grid.best.slope << '\n';
    c.train.learning_rate = grid.best.learning_rate;
    c.model.slope = grid.best.slope;
  }

  net::Model model = resumed ? resumed->model
                             : net::Model::create(c.model, c.train.seed,
                                                  embeddings);
  train::OptimizerState state =
      resumed ? *resumed->optimizer
              : train::OptimizerState::for_params(model.params());
  train::TrainingProgress progress =
      resumed ? resumed->progress : train::TrainingProgress{};

  {
    std::ofstream cfg_out(fs::path(c.out_dir) / "config.txt");
    config::write(cfg_out, c);
  }
  const fs::path log_path = fs::path(c.out_dir) / "metrics.tsv";
  const fs::path best_path = fs::path(c.out_dir) / "best.ckpt";
  const fs::path last_path = fs::path(c.out_dir) / "last.ckpt";
  std::ofstream log(log_path, resumed ? std::ios::app : std::ios::trunc);
  if (!log) throw IoError("cannot write " + log_path.string());
  if (!resumed) log << train::metrics_header() << '\n';
  io.out << train::metrics_header() << '\n';

  train::FitOptions fo;
  fo.log_timing = c.log_timing;
  fo.on_epoch = [&](const train::EpochRecord& r) {
    const auto line = train::format_metrics_line(r);
    log << line << '\n' << std::flush;
    io.out << line << '\n' << std::flush;
    train::save_checkpoint(last_path, model, &state, &vocab, progress);
  };
  fo.on_best = [&](const net::Model& m, const train::TrainingProgress& p) {
    train::save_checkpoint(best_path, m, &state, &vocab, p);
  };
  train::fit(model, state, progress, train_docs, val_docs, c.train, fo);
  io.out << "best epoch " << progress.best_epoch << " val_acc "
         << fixed(progress.best_val_acc, 4) << '\n'
         << "checkpoint " << best_path.string() << '\n';

  if (!c.test_dataset.empty() && fs::exists(best_path)) {
    const auto best = train::load_checkpoint(best_path);
    const auto test = load_nonempty("test_dataset", c.test_dataset, c);
    const auto test_docs = encode_all(test, vocab, c.model.num_classes);
    const auto e = train::evaluate(best.model, test_docs, c.train.threads);
    io.out << "test accuracy " << fixed(e.accuracy, 4) << '\n';
  }
  return kExitOk;
}

int cmd_eval(const config::RunConfig& c, Streams io) {
  const std::string& path = c.test_dataset.empty() ? c.dataset : c.test_dataset;
  const std::string key = c.test_dataset.empty() ? "dataset" : "test_dataset";
  require_file(key, path);
  const auto snap = load_snapshot(c);
  const auto corpus = load_nonempty(key, path, c);
  const auto docs = encode_all(corpus, *snap.vocabulary,
                               snap.model.config().num_classes);
  const auto e = c.train.parallel ? train::evaluate(snap.model, docs, c.train.threads)
                                  : train::evaluate_serial(snap.model, docs);
  io.out << "documents " << docs.size() << '\n'
         << "accuracy " << fixed(e.accuracy, 6) << '\n'
         << "mean_loss " << fixed(e.mean_loss, 6) << '\n'
         << "confusion (rows: true label, columns: predicted)\n";
  for (std::size_t i = 0; i < e.confusion.size(); ++i) {
    io.out << i + 1;
    for (std::size_t n : e.confusion[i]) io.out << '\t' << n;
    io.out << '\n';
  }
  return kExitOk;
}

int cmd_predict(const config::RunConfig& c, Streams io) {
  const auto snap = load_snapshot(c);
  const std::string raw((std::istreambuf_iterator<char>(io.in)),
                        std::istreambuf_iterator<char>());
  const auto tokens = text::tokenize(raw, tokenize_options(c));
  const auto doc = snap.vocabulary->encode(tokens, 0);
  const auto p = train::predict(snap.model, doc);
  io.out << "label " << p.label + 1 << '\n' << "probabilities";
  for (double v : p.probabilities) io.out << ' ' << fixed(v, 6);
  io.out << '\n';
  io.out << analysis::render_markup(
      analysis::document_tokens(doc, *snap.vocabulary), p.trace);
  return kExitOk;
}

int cmd_analyze(const config::RunConfig& c, Streams io) {
  const std::string& path = c.test_dataset.empty() ? c.dataset : c.test_dataset;
  const std::string key = c.test_dataset.empty() ? "dataset" : "test_dataset";
  require_file(key, path);
  const auto snap = load_snapshot(c);
  const auto corpus = load_nonempty(key, path, c);
  const auto docs = encode_all(corpus, *snap.vocabulary,
                               snap.model.config().num_classes);
  ensure_dir(c.out_dir);

  std::vector<net::BoundaryTrace> traces;
  std::ofstream markup(fs::path(c.out_dir) / "boundaries.txt");
  for (const auto& d : docs) {
    traces.push_back(train::predict(snap.model, d).trace);
    markup << analysis::render_markup(
                  analysis::document_tokens(d, *snap.vocabulary),
                  traces.back())
           << '\n';
  }
  const auto stats = analysis::phrase_stats(traces);
  const auto table = analysis::conjunction_table(
      traces, *snap.vocabulary, analysis::default_conjunctions());

  const bool tsv = c.report_format == "tsv";
  const std::string ext = tsv ? ".tsv" : ".txt";
  {
    std::ofstream f(fs::path(c.out_dir) / ("phrase_lengths" + ext));
    tsv ? analysis::write_stats_tsv(f, stats)
        : analysis::write_stats_text(f, stats);
  }
  {
    std::ofstream f(fs::path(c.out_dir) / ("conjunctions" + ext));
    tsv ? analysis::write_conjunctions_tsv(f, table)
        : analysis::write_conjunctions_text(f, table);
  }
  analysis::write_stats_text(io.out, stats);
  analysis::write_conjunctions_text(io.out, table);
  return kExitOk;
}

int cmd_gradcheck(const config::RunConfig& c, Streams io) {
  const auto report = gradcheck::run(c.train.seed);
  gradcheck::write_table(io.out, report);
  io.err << "gradcheck runtime " << fixed(report.seconds, 2) << " s\n";
  if (report.passed()) return kExitOk;
  const auto& w = report.worst();
  io.out << "FAILED: worst offender " << w.component << " at " << w.worst
         << " (relative error " << w.max_error << ")\n";
  return kExitVerification;
}

int cmd_gen_synthetic(const config::RunConfig& c, Streams io) {
  ensure_dir(c.out_dir);
  const auto task = synthetic::generate_task(c.synthetic_train,
                                             c.synthetic_test, c.train.seed);
  const fs::path train_path = fs::path(c.out_dir) / "train.csv";
  const fs::path test_path = fs::path(c.out_dir) / "test.csv";
  synthetic::write_csv(train_path, task.train);
  synthetic::write_csv(test_path, task.test);
  io.out << "wrote " << task.train.size() << " documents to "
         << train_path.string() << '\n'
         << "wrote " << task.test.size() << " documents to "
         << test_path.string() << '\n';
  return kExitOk;
}

std::optional<ad::Op> parse_op(const std::string& name) {
  for (int i = 0; i <= static_cast<int>(ad::Op::neg_log_pick); ++i)
    if (name == ad::op_name(static_cast<ad::Op>(i)))
      return static_cast<ad::Op>(i);
  return std::nullopt;
}

}  // namespace

int run(int argc, const char* const* argv, std::istream& in, std::ostream& out,
        std::ostream& err) {
  CLI::App app{"Multiscale hierarchical recurrent document classifier",
               "mhs-rnn"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::string fault;
  bool print_config = false;
  std::map<std::string, std::string> flags;
  app.add_option("--config", config_path, "configuration file (key = value)");
  app.add_option("--seed", flags["seed"], "random seed");
  app.add_option("--out", flags["out_dir"], "output directory");
  app.add_option("--inject-fault", fault)->group("");
  app.add_flag("--print-config", print_config,
               "print the resolved configuration before running");
  for (const auto& key : config::keys()) {
    if (key == "seed" || key == "out_dir") continue;
    app.add_option("--" + key, flags[key])->group("Settings");
  }

  struct Command {
    const char* name;
    const char* help;
    int (*fn)(const config::RunConfig&, Streams);
  };
  const Command commands[] = {
      {"train", "train a model and save the best checkpoint", cmd_train},
      {"eval", "report accuracy of a checkpoint on a dataset", cmd_eval},
      {"predict", "classify text read from stdin", cmd_predict},
      {"analyze", "phrase-length and conjunction-boundary reports",
       cmd_analyze},
      {"gradcheck", "finite-difference gradient verification", cmd_gradcheck},
      {"gen-synthetic", "write the trigger-phrase dataset", cmd_gen_synthetic},
  };
  std::vector<CLI::App*> subs;
  for (const auto& cmd : commands) subs.push_back(app.add_subcommand(cmd.name, cmd.help));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  Streams io{in, out, err};
  try {
    config::RunConfig cfg;
    if (!config_path.empty()) config::apply_file(cfg, config_path);
    for (const auto& key : config::keys())
      if (app.count("--" + std::string(key == "out_dir" ? "out" : key)) > 0)
        config::apply(cfg, key, flags[key]);
    config::validate(cfg);
    if (print_config) config::write(out, cfg);

    if (!fault.empty()) {
      const auto op = parse_op(fault);
      if (!op) throw UsageError("unknown primitive '" + fault + "'");
      ad::debug::corrupt_backward(op);
    }
    struct Reset {
      ~Reset() { ad::debug::corrupt_backward(std::nullopt); }
    } reset;

    for (std::size_t i = 0; i < subs.size(); ++i)
      if (subs[i]->parsed()) return commands[i].fn(cfg, io);
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const EmptyDocumentError& e) {
    err << "empty document: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ParseError& e) {
    err << "parse error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DimensionError& e) {
    err << "dimension error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << '\n';
    return kExitRuntime;
  } catch (const IntegrityError& e) {
    err << "integrity error: " << e.what() << '\n';
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace mhs::cli
