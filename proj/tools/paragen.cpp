// Command-line front end: prepare, train, generate, evaluate, augment, and
// replay. Every run resolves its configuration (flags over an optional JSON
// config file), derives all randomness from one --seed, executes, and writes
// a manifest next to its primary output on success and on failure. replay
// re-executes a finished manifest through the same code path, so reruns are
// byte-identical. File formats are described in docs/formats.md.
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "paragen/augment.hpp"
#include "paragen/backend.hpp"
#include "paragen/corpus.hpp"
#include "paragen/corruption.hpp"
#include "paragen/errors.hpp"
#include "paragen/kernels.hpp"
#include "paragen/lm.hpp"
#include "paragen/manifest.hpp"
#include "paragen/metrics.hpp"
#include "paragen/rng.hpp"
#include "paragen/scoring.hpp"
#include "paragen/text.hpp"

namespace {

using nlohmann::json;
using paragen::BackendError;
using paragen::InputError;
using paragen::NumericError;
using paragen::derive_seed;
using paragen::manifest::RunManifest;

void require_opt(const std::string& value, const char* flag) {
    if (value.empty())
        throw InputError(std::string("missing required option ") + flag);
}

// Maps config-file keys (long option names without dashes) onto the bound
// variables of one subcommand. Command-line flags always win.
class ConfigBinder {
  public:
    explicit ConfigBinder(CLI::App* sub) : sub_(sub) {
        sub->add_option("--config", path_,
                        "JSON object of defaults; keys are long option names "
                        "without the leading dashes, flags override");
    }

    template <typename T>
    CLI::Option* opt(T& var, const std::string& flag, const std::string& desc) {
        CLI::Option* o = sub_->add_option(flag, var, desc);
        entries_.push_back({flag.substr(2), o,
                            [&var](const json& v) { var = v.get<T>(); }});
        return o;
    }

    CLI::Option* flag(bool& var, const std::string& name, const std::string& desc) {
        CLI::Option* o = sub_->add_flag(name, var, desc);
        entries_.push_back({name.substr(2), o,
                            [&var](const json& v) { var = v.get<bool>(); }});
        return o;
    }

    // Called after parsing, before the run starts.
    void overlay() const {
        if (path_.empty()) return;
        std::ifstream in(path_, std::ios::binary);
        if (!in) throw InputError("cannot read config file: " + path_);
        json cfg;
        try {
            cfg = json::parse(in);
        } catch (const json::exception& e) {
            throw InputError(path_ + ": " + e.what());
        }
        if (!cfg.is_object())
            throw InputError(path_ + ": config must be a JSON object");
        for (const auto& [key, value] : cfg.items()) {
            const Entry* entry = nullptr;
            for (const Entry& e : entries_)
                if (e.key == key) entry = &e;
            if (!entry) throw InputError(path_ + ": unknown config key: " + key);
            try {
                if (entry->option->count() == 0) entry->apply(value);
            } catch (const json::exception& e) {
                throw InputError(path_ + ": key " + key + ": " + e.what());
            }
        }
    }

  private:
    struct Entry {
        std::string key;
        CLI::Option* option;
        std::function<void(const json&)> apply;
    };
    CLI::App* sub_;
    std::string path_;
    std::vector<Entry> entries_;
};

std::string json_string(const json& j, const char* key) {
    try {
        return j.at(key).get<std::string>();
    } catch (const json::exception& e) {
        throw InputError(std::string("config key ") + key + ": " + e.what());
    }
}

template <typename T>
T json_value(const json& j, const char* key) {
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw InputError(std::string("config key ") + key + ": " + e.what());
    }
}

std::string remap(const std::string& path, const std::string& out_dir) {
    if (out_dir.empty() || path.empty()) return path;
    return (std::filesystem::path(out_dir) /
            std::filesystem::path(path).filename())
        .string();
}

// ---------------------------------------------------------------- prepare

struct PrepareOptions {
    std::string corpus, stopwords, lexicon, out;
    std::uint64_t seed = 0;
    int min_freq = 2;
    double train_frac = 0.9;
    double shuffle_prob = 0.2;
    double synonym_prob = 0.2;
    int max_len = 128;

    json to_json() const {
        return {{"corpus", corpus},           {"stopwords", stopwords},
                {"lexicon", lexicon},         {"out", out},
                {"seed", seed},               {"min-freq", min_freq},
                {"train-frac", train_frac},   {"shuffle-prob", shuffle_prob},
                {"synonym-prob", synonym_prob}, {"max-len", max_len}};
    }
    static PrepareOptions from_json(const json& j) {
        PrepareOptions o;
        o.corpus = json_string(j, "corpus");
        o.stopwords = json_string(j, "stopwords");
        o.lexicon = json_string(j, "lexicon");
        o.out = json_string(j, "out");
        o.seed = json_value<std::uint64_t>(j, "seed");
        o.min_freq = json_value<int>(j, "min-freq");
        o.train_frac = json_value<double>(j, "train-frac");
        o.shuffle_prob = json_value<double>(j, "shuffle-prob");
        o.synonym_prob = json_value<double>(j, "synonym-prob");
        o.max_len = json_value<int>(j, "max-len");
        return o;
    }
};

void run_prepare(const PrepareOptions& o, RunManifest& m) {
    require_opt(o.corpus, "--corpus");
    require_opt(o.stopwords, "--stopwords");
    require_opt(o.out, "--out");
    if (o.min_freq < 1) throw InputError("--min-freq must be >= 1");
    if (!(o.train_frac > 0.0 && o.train_frac < 1.0))
        throw InputError("--train-frac must lie in (0, 1)");

    m.inputs["corpus"] = o.corpus;
    m.inputs["stopwords"] = o.stopwords;
    if (!o.lexicon.empty()) m.inputs["lexicon"] = o.lexicon;
    m.seeds["global"] = o.seed;
    m.seeds["split"] = derive_seed(o.seed, "split");
    m.seeds["corrupt-train"] = derive_seed(o.seed, "corrupt-train");
    m.seeds["corrupt-valid"] = derive_seed(o.seed, "corrupt-valid");

    paragen::corruption::CorruptionConfig ccfg;
    ccfg.stopwords = paragen::corruption::load_stopwords(o.stopwords);
    ccfg.shuffle_prob = o.shuffle_prob;
    ccfg.synonym_prob = o.synonym_prob;
    ccfg.seed = o.seed;
    ccfg.validate();
    paragen::corruption::SynonymLexicon lexicon;
    if (!o.lexicon.empty())
        lexicon = paragen::corruption::SynonymLexicon::load(o.lexicon);

    const auto sentences = paragen::corpus::load_plain_corpus(o.corpus);
    auto split = paragen::corpus::split_corpus(sentences, o.train_frac,
                                               m.seeds["split"]);
    const auto vocab = paragen::corpus::build_vocabulary(split.train, o.min_freq);

    std::filesystem::create_directories(o.out);
    const auto outfile = [&](const char* name) {
        return (std::filesystem::path(o.out) / name).string();
    };
    vocab.save(outfile("vocab.tsv"));

    std::vector<std::vector<std::string>> idf_docs;
    idf_docs.reserve(split.train.size());
    for (const auto& s : split.train) idf_docs.push_back(s.tokens);
    const auto idf = paragen::scoring::IdfTable::build(idf_docs);
    idf.save(outfile("idf.tsv"));

    int skipped = 0, truncated = 0;
    const auto write_shard = [&](const char* path,
                                 const std::vector<paragen::corpus::Sentence>& part,
                                 const char* stream) {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw InputError(std::string("cannot write shard: ") + path);
        int written = 0;
        for (std::size_t i = 0; i < part.size(); ++i) {
            paragen::Rng rng(derive_seed(o.seed, stream, i));
            const auto src = paragen::corruption::corrupt(part[i], ccfg, lexicon, rng);
            if (src.degenerate) {
                ++skipped;
                continue;
            }
            const auto ex = paragen::corpus::encode(src.tokens, part[i].tokens,
                                                    vocab, o.max_len);
            if (ex.truncated) ++truncated;
            for (std::size_t k = 0; k < ex.input_ids.size(); ++k) {
                if (k) out << ' ';
                out << ex.input_ids[k];
            }
            out << '\n';
            ++written;
        }
        if (!out.flush()) throw InputError(std::string("cannot write shard: ") + path);
        return written;
    };
    const int train_written = write_shard(outfile("train.ids").c_str(), split.train,
                                          "corrupt-train");
    const int valid_written = write_shard(outfile("valid.ids").c_str(), split.valid,
                                          "corrupt-valid");
    if (train_written == 0 || valid_written == 0)
        std::cerr << "warning: a shard ended up empty; every sentence in it "
                     "reduced to stop words\n";

    json stats;
    stats["sentences"] = sentences.size();
    stats["train_sentences"] = split.train.size();
    stats["valid_sentences"] = split.valid.size();
    stats["train_examples"] = train_written;
    stats["valid_examples"] = valid_written;
    stats["skipped_degenerate"] = skipped;
    stats["truncated"] = truncated;
    stats["vocab_size"] = vocab.size();
    stats["vocab_hash"] = vocab.hash();
    stats["min_freq"] = o.min_freq;
    {
        std::ofstream out(outfile("stats.json"), std::ios::binary | std::ios::trunc);
        if (!out) throw InputError("cannot write stats.json");
        out << stats.dump(2) << '\n';
    }

    m.outputs["vocab"] = outfile("vocab.tsv");
    m.outputs["idf"] = outfile("idf.tsv");
    m.outputs["train_shard"] = outfile("train.ids");
    m.outputs["valid_shard"] = outfile("valid.ids");
    m.outputs["stats"] = outfile("stats.json");
    std::cout << "prepared " << train_written << " train / " << valid_written
              << " valid examples, vocab " << vocab.size() << ", skipped "
              << skipped << " degenerate\n";
}

// ------------------------------------------------------------------ train

struct TrainOptions {
    std::string data, out, log;
    std::uint64_t seed = 0;
    int d_model = 128, n_heads = 4, n_layers = 4, d_ffn = 512, max_len = 128;
    double dropout = 0.0;
    double lr = 3e-4;
    int batch_size = 16, epochs = 5, patience = 2;
    bool target_only = false;
    double warmup_frac = 0.05;

    json to_json() const {
        return {{"data", data},       {"out", out},
                {"log", log},         {"seed", seed},
                {"d-model", d_model}, {"n-heads", n_heads},
                {"n-layers", n_layers}, {"d-ffn", d_ffn},
                {"max-len", max_len}, {"dropout", dropout},
                {"lr", lr},           {"batch-size", batch_size},
                {"epochs", epochs},   {"patience", patience},
                {"target-only", target_only}, {"warmup-frac", warmup_frac}};
    }
    static TrainOptions from_json(const json& j) {
        TrainOptions o;
        o.data = json_string(j, "data");
        o.out = json_string(j, "out");
        o.log = json_string(j, "log");
        o.seed = json_value<std::uint64_t>(j, "seed");
        o.d_model = json_value<int>(j, "d-model");
        o.n_heads = json_value<int>(j, "n-heads");
        o.n_layers = json_value<int>(j, "n-layers");
        o.d_ffn = json_value<int>(j, "d-ffn");
        o.max_len = json_value<int>(j, "max-len");
        o.dropout = json_value<double>(j, "dropout");
        o.lr = json_value<double>(j, "lr");
        o.batch_size = json_value<int>(j, "batch-size");
        o.epochs = json_value<int>(j, "epochs");
        o.patience = json_value<int>(j, "patience");
        o.target_only = json_value<bool>(j, "target-only");
        o.warmup_frac = json_value<double>(j, "warmup-frac");
        return o;
    }
};

std::vector<paragen::TrainingExample> load_examples(const std::string& path,
                                                    int vocab_size) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot read shard: " + path);
    std::vector<paragen::TrainingExample> out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::string where = path + ":" + std::to_string(line_no);
        std::istringstream row(line);
        std::vector<int> ids;
        int id;
        while (row >> id) ids.push_back(id);
        if (!row.eof()) throw InputError(where + ": non-numeric token id");
        int sep = -1;
        for (std::size_t k = 0; k < ids.size(); ++k) {
            if (ids[k] < 0 || ids[k] >= vocab_size)
                throw InputError(where + ": token id out of range: " +
                                 std::to_string(ids[k]));
            if (ids[k] == paragen::corpus::kSep) {
                if (sep >= 0) throw InputError(where + ": multiple separators");
                sep = static_cast<int>(k);
            }
        }
        if (ids.size() < 4 || ids.front() != paragen::corpus::kBos ||
            ids.back() != paragen::corpus::kEos || sep < 1)
            throw InputError(where + ": not a BOS .. SEP .. EOS example");
        paragen::TrainingExample ex;
        ex.input_ids = std::move(ids);
        ex.sep_index = sep;
        ex.source_len = sep - 1;
        ex.target_len = static_cast<int>(ex.input_ids.size()) - sep - 2;
        out.push_back(std::move(ex));
    }
    return out;
}

void run_train(const TrainOptions& o, RunManifest& m) {
    require_opt(o.data, "--data");
    require_opt(o.out, "--out");
    const std::string log_path = o.log.empty() ? o.out + ".log.csv" : o.log;

    const auto shard = [&](const char* name) {
        return (std::filesystem::path(o.data) / name).string();
    };
    m.inputs["vocab"] = shard("vocab.tsv");
    m.inputs["train_shard"] = shard("train.ids");
    m.inputs["valid_shard"] = shard("valid.ids");
    m.seeds["global"] = o.seed;
    m.seeds["train"] = derive_seed(o.seed, "train");

    const auto vocab = paragen::corpus::Vocabulary::load(shard("vocab.tsv"));
    const auto train_set = load_examples(shard("train.ids"), vocab.size());
    const auto valid_set = load_examples(shard("valid.ids"), vocab.size());

    paragen::ModelConfig mc;
    mc.vocab_size = vocab.size();
    mc.d_model = o.d_model;
    mc.n_heads = o.n_heads;
    mc.n_layers = o.n_layers;
    mc.d_ffn = o.d_ffn;
    mc.max_len = o.max_len;
    mc.dropout = static_cast<paragen::real>(o.dropout);
    mc.validate();

    paragen::TrainConfig tc;
    tc.learning_rate = static_cast<paragen::real>(o.lr);
    tc.batch_size = o.batch_size;
    tc.max_epochs = o.epochs;
    tc.patience = o.patience;
    tc.seed = m.seeds["train"];
    tc.target_only_loss = o.target_only;
    tc.warmup_frac = static_cast<paragen::real>(o.warmup_frac);

    std::ofstream log(log_path, std::ios::binary | std::ios::trunc);
    if (!log) throw InputError("cannot write training log: " + log_path);
    log << "epoch,train_loss,valid_perplexity,improved\n";
    log.flush();  // rows survive a mid-training failure
    const auto on_epoch = [&](const paragen::EpochStats& s) {
        char row[96];
        std::snprintf(row, sizeof row, "%d,%.17g,%.17g,%d\n", s.epoch,
                      static_cast<double>(s.train_loss),
                      static_cast<double>(s.valid_perplexity), s.improved ? 1 : 0);
        log << row;
        log.flush();
    };

    const auto ckpt = paragen::train(train_set, valid_set, mc, tc, vocab.hash(),
                                     on_epoch);
    paragen::save_checkpoint(ckpt, o.out);

    m.outputs["checkpoint"] = o.out;
    m.outputs["log"] = log_path;
    char line[96];
    std::snprintf(line, sizeof line, "best epoch %d, valid perplexity %.4f\n",
                  ckpt.best_epoch, ckpt.valid_perplexity);
    std::cout << line;
}

// --------------------------------------------------------------- generate

struct GenerateOptions {
    std::string input, out, checkpoint, vocab, idf, stopwords, lexicon, backend;
    int n = 10, k = 10, max_new = 64;
    double temperature = 1.0, threshold = 0.75;
    bool strict = false;
    double source_shuffle = 0.0, source_synonym = 0.0;
    std::uint64_t seed = 0;
    double backend_timeout = 30.0;

    json to_json() const {
        return {{"input", input},
                {"out", out},
                {"checkpoint", checkpoint},
                {"vocab", vocab},
                {"idf", idf},
                {"stopwords", stopwords},
                {"lexicon", lexicon},
                {"backend", backend},
                {"n", n},
                {"k", k},
                {"max-new", max_new},
                {"temperature", temperature},
                {"threshold", threshold},
                {"strict-threshold", strict},
                {"source-shuffle", source_shuffle},
                {"source-synonym", source_synonym},
                {"seed", seed},
                {"backend-timeout", backend_timeout}};
    }
    static GenerateOptions from_json(const json& j) {
        GenerateOptions o;
        o.input = json_string(j, "input");
        o.out = json_string(j, "out");
        o.checkpoint = json_string(j, "checkpoint");
        o.vocab = json_string(j, "vocab");
        o.idf = json_string(j, "idf");
        o.stopwords = json_string(j, "stopwords");
        o.lexicon = json_string(j, "lexicon");
        o.backend = json_string(j, "backend");
        o.n = json_value<int>(j, "n");
        o.k = json_value<int>(j, "k");
        o.max_new = json_value<int>(j, "max-new");
        o.temperature = json_value<double>(j, "temperature");
        o.threshold = json_value<double>(j, "threshold");
        o.strict = json_value<bool>(j, "strict-threshold");
        o.source_shuffle = json_value<double>(j, "source-shuffle");
        o.source_synonym = json_value<double>(j, "source-synonym");
        o.seed = json_value<std::uint64_t>(j, "seed");
        o.backend_timeout = json_value<double>(j, "backend-timeout");
        return o;
    }
};

// Owns whichever generator/embedder pair the options select and keeps their
// backing objects (model, vocabulary, backend process) alive together.
struct GenerationStack {
    std::optional<paragen::corpus::Vocabulary> vocab;
    std::optional<paragen::Model> model;
    std::unique_ptr<paragen::backend::BackendProcess> process;
    std::unique_ptr<paragen::scoring::CandidateGenerator> generator;
    std::unique_ptr<paragen::scoring::Embedder> embedder;
    paragen::corruption::CorruptionConfig corruption;
    paragen::corruption::SynonymLexicon lexicon;
};

GenerationStack build_generation_stack(const std::string& checkpoint,
                                       const std::string& vocab_path,
                                       const std::string& idf_path,
                                       const std::string& stopwords_path,
                                       const std::string& lexicon_path,
                                       const std::string& backend_command,
                                       double backend_timeout, int k,
                                       double temperature, int max_new,
                                       std::uint64_t seed, RunManifest& m) {
    require_opt(stopwords_path, "--stopwords");
    GenerationStack s;
    s.corruption.stopwords = paragen::corruption::load_stopwords(stopwords_path);
    s.corruption.seed = seed;
    s.corruption.validate();
    m.inputs["stopwords"] = stopwords_path;
    if (!lexicon_path.empty()) {
        s.lexicon = paragen::corruption::SynonymLexicon::load(lexicon_path);
        m.inputs["lexicon"] = lexicon_path;
    }

    if (!backend_command.empty()) {
        paragen::backend::BackendConfig bc;
        bc.command = backend_command;
        bc.timeout_seconds = backend_timeout;
        s.process = std::make_unique<paragen::backend::BackendProcess>(bc);
        s.generator =
            std::make_unique<paragen::backend::ExternalGenerator>(*s.process);
        s.embedder = std::make_unique<paragen::backend::ExternalEmbedder>(*s.process);
        return s;
    }

    require_opt(checkpoint, "--checkpoint (or --backend)");
    require_opt(vocab_path, "--vocab");
    require_opt(idf_path, "--idf");
    m.inputs["checkpoint"] = checkpoint;
    m.inputs["vocab"] = vocab_path;
    m.inputs["idf"] = idf_path;
    s.vocab = paragen::corpus::Vocabulary::load(vocab_path);
    const auto ckpt = paragen::load_checkpoint(checkpoint, s.vocab->hash());
    s.model = ckpt.to_model();
    paragen::SampleConfig sc;
    sc.k = k;
    sc.temperature = static_cast<paragen::real>(temperature);
    sc.max_new = max_new;
    s.generator = std::make_unique<paragen::scoring::LmGenerator>(*s.model, *s.vocab,
                                                                  sc);
    s.embedder = std::make_unique<paragen::scoring::LmMeanIdfEmbedder>(
        *s.model, *s.vocab, paragen::scoring::IdfTable::load(idf_path));
    return s;
}

void run_generate(const GenerateOptions& o, RunManifest& m) {
    require_opt(o.input, "--input");
    require_opt(o.out, "--out");
    m.inputs["input"] = o.input;
    m.seeds["global"] = o.seed;
    m.seeds["generate"] = derive_seed(o.seed, "generate");

    GenerationStack stack = build_generation_stack(
        o.checkpoint, o.vocab, o.idf, o.stopwords, o.lexicon, o.backend,
        o.backend_timeout, o.k, o.temperature, o.max_new, o.seed, m);

    paragen::scoring::PipelineConfig pcfg;
    pcfg.n_requested = o.n;
    pcfg.threshold = o.threshold;
    pcfg.strict_threshold = o.strict;
    pcfg.source_shuffle = o.source_shuffle;
    pcfg.source_synonym = o.source_synonym;
    pcfg.seed = m.seeds["generate"];
    pcfg.validate();

    const auto sentences = paragen::corpus::load_plain_corpus(o.input);
    if (sentences.empty()) throw InputError("no input sentences: " + o.input);

    std::vector<paragen::scoring::CandidateSet> sets;
    sets.reserve(sentences.size());
    std::size_t valid_total = 0;
    for (std::size_t i = 0; i < sentences.size(); ++i) {
        sets.push_back(paragen::scoring::build_candidate_set(
            sentences[i], *stack.generator, *stack.embedder, stack.corruption,
            stack.lexicon, pcfg, i));
        valid_total += sets.back().valid().size();
    }
    paragen::scoring::save_candidate_sets(o.out, sets);

    m.outputs["candidates"] = o.out;
    std::cout << "generated " << sets.size() << " candidate sets, "
              << valid_total << " valid candidates\n";
}

// --------------------------------------------------------------- evaluate

struct EvaluateOptions {
    std::string candidates, references, protocol = "best_candidate", lexicon, out;
    int bleu_max_n = 4;

    json to_json() const {
        return {{"candidates", candidates}, {"references", references},
                {"protocol", protocol},     {"lexicon", lexicon},
                {"out", out},               {"bleu-max-n", bleu_max_n}};
    }
    static EvaluateOptions from_json(const json& j) {
        EvaluateOptions o;
        o.candidates = json_string(j, "candidates");
        o.references = json_string(j, "references");
        o.protocol = json_string(j, "protocol");
        o.lexicon = json_string(j, "lexicon");
        o.out = json_string(j, "out");
        o.bleu_max_n = json_value<int>(j, "bleu-max-n");
        return o;
    }
};

void run_evaluate(const EvaluateOptions& o, RunManifest& m) {
    require_opt(o.candidates, "--candidates");
    require_opt(o.references, "--references");
    require_opt(o.out, "--out");
    const auto protocol = paragen::metrics::protocol_from_name(o.protocol);
    m.inputs["candidates"] = o.candidates;
    m.inputs["references"] = o.references;

    paragen::corruption::SynonymLexicon lexicon;
    if (!o.lexicon.empty()) {
        lexicon = paragen::corruption::SynonymLexicon::load(o.lexicon);
        m.inputs["lexicon"] = o.lexicon;
    }

    const auto sets = paragen::scoring::load_candidate_sets(o.candidates);
    const auto pairs = paragen::corpus::load_pair_dataset(o.references);
    std::map<std::string, paragen::metrics::Tokens> references;
    for (const auto& rec : pairs.records)
        references.emplace(paragen::scoring::normalize_text(rec.question1),
                           paragen::text::tokenize(rec.question2));

    std::vector<paragen::metrics::EvalExample> examples;
    examples.reserve(sets.size());
    for (const auto& set : sets) {
        const auto it =
            references.find(paragen::scoring::normalize_text(set.original.raw));
        if (it == references.end())
            throw InputError("no reference for input sentence: " +
                             set.original.raw);
        paragen::metrics::EvalExample ex;
        ex.reference = it->second;
        for (const auto& c :
             paragen::scoring::select_top_m(set, std::max(1, set.n_requested)))
            ex.candidates.push_back(c.tokens);
        examples.push_back(std::move(ex));
    }

    const auto report =
        paragen::metrics::evaluate(examples, protocol, lexicon, o.bleu_max_n);
    std::ofstream out(o.out, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write report: " + o.out);
    out << paragen::metrics::report_to_json(report) << '\n';
    if (!out.flush()) throw InputError("cannot write report: " + o.out);
    m.outputs["report"] = o.out;
    std::cout << paragen::metrics::report_table(report);
}

// ---------------------------------------------------------------- augment

struct AugmentOptions {
    std::string train, test, classifier = "nbsvm", out;
    int per_doc = 1, max_n = 3;
    double alpha = 1.0, beta = 0.25, c = 1.0, clf_lr = 0.1;
    int clf_epochs = 200;
    int trees = 100, max_depth = 0, mtry = 0, min_leaf = 1;
    std::uint64_t seed = 0;
    // generation pipeline (optional; without a model or backend the enhanced
    // condition trains on the originals only)
    std::string checkpoint, vocab, idf, stopwords, lexicon, backend;
    int n = 10, k = 10, max_new = 64;
    double temperature = 1.0, threshold = 0.75;
    bool strict = false;
    double backend_timeout = 30.0;

    json to_json() const {
        return {{"train", train},
                {"test", test},
                {"classifier", classifier},
                {"out", out},
                {"per-doc", per_doc},
                {"max-n", max_n},
                {"alpha", alpha},
                {"beta", beta},
                {"c", c},
                {"clf-lr", clf_lr},
                {"clf-epochs", clf_epochs},
                {"trees", trees},
                {"max-depth", max_depth},
                {"mtry", mtry},
                {"min-leaf", min_leaf},
                {"seed", seed},
                {"checkpoint", checkpoint},
                {"vocab", vocab},
                {"idf", idf},
                {"stopwords", stopwords},
                {"lexicon", lexicon},
                {"backend", backend},
                {"n", n},
                {"k", k},
                {"max-new", max_new},
                {"temperature", temperature},
                {"threshold", threshold},
                {"strict-threshold", strict},
                {"backend-timeout", backend_timeout}};
    }
    static AugmentOptions from_json(const json& j) {
        AugmentOptions o;
        o.train = json_string(j, "train");
        o.test = json_string(j, "test");
        o.classifier = json_string(j, "classifier");
        o.out = json_string(j, "out");
        o.per_doc = json_value<int>(j, "per-doc");
        o.max_n = json_value<int>(j, "max-n");
        o.alpha = json_value<double>(j, "alpha");
        o.beta = json_value<double>(j, "beta");
        o.c = json_value<double>(j, "c");
        o.clf_lr = json_value<double>(j, "clf-lr");
        o.clf_epochs = json_value<int>(j, "clf-epochs");
        o.trees = json_value<int>(j, "trees");
        o.max_depth = json_value<int>(j, "max-depth");
        o.mtry = json_value<int>(j, "mtry");
        o.min_leaf = json_value<int>(j, "min-leaf");
        o.seed = json_value<std::uint64_t>(j, "seed");
        o.checkpoint = json_string(j, "checkpoint");
        o.vocab = json_string(j, "vocab");
        o.idf = json_string(j, "idf");
        o.stopwords = json_string(j, "stopwords");
        o.lexicon = json_string(j, "lexicon");
        o.backend = json_string(j, "backend");
        o.n = json_value<int>(j, "n");
        o.k = json_value<int>(j, "k");
        o.max_new = json_value<int>(j, "max-new");
        o.temperature = json_value<double>(j, "temperature");
        o.threshold = json_value<double>(j, "threshold");
        o.strict = json_value<bool>(j, "strict-threshold");
        o.backend_timeout = json_value<double>(j, "backend-timeout");
        return o;
    }
};

void run_augment(const AugmentOptions& o, RunManifest& m) {
    require_opt(o.train, "--train");
    require_opt(o.test, "--test");
    require_opt(o.out, "--out");
    m.inputs["train"] = o.train;
    m.inputs["test"] = o.test;
    m.seeds["global"] = o.seed;
    m.seeds["nbsvm"] = derive_seed(o.seed, "nbsvm");
    m.seeds["forest"] = derive_seed(o.seed, "forest");
    m.seeds["augment-pipeline"] = derive_seed(o.seed, "augment-pipeline");

    paragen::augment::ExperimentConfig ecfg;
    ecfg.classifier = paragen::augment::classifier_from_name(o.classifier);
    ecfg.nbsvm.alpha = o.alpha;
    ecfg.nbsvm.beta = o.beta;
    ecfg.nbsvm.c = o.c;
    ecfg.nbsvm.learning_rate = o.clf_lr;
    ecfg.nbsvm.epochs = o.clf_epochs;
    ecfg.nbsvm.seed = m.seeds["nbsvm"];
    ecfg.rf.n_trees = o.trees;
    ecfg.rf.max_depth = o.max_depth;
    ecfg.rf.mtry = o.mtry;
    ecfg.rf.min_leaf = o.min_leaf;
    ecfg.rf.seed = m.seeds["forest"];
    ecfg.per_doc = o.per_doc;
    ecfg.max_n = o.max_n;
    ecfg.pipeline_seed = m.seeds["augment-pipeline"];
    ecfg.validate();

    const auto train_docs = paragen::augment::load_labeled_tsv(o.train);
    const auto test_docs = paragen::augment::load_labeled_tsv(o.test);

    paragen::augment::ParaphraseFn paraphrase =
        [](const paragen::augment::LabeledDoc&, std::uint64_t) {
            return std::vector<std::string>{};
        };
    std::optional<GenerationStack> stack;
    paragen::scoring::PipelineConfig pcfg;
    const bool has_pipeline = !o.checkpoint.empty() || !o.backend.empty();
    if (has_pipeline && o.per_doc > 0) {
        stack.emplace(build_generation_stack(o.checkpoint, o.vocab, o.idf,
                                             o.stopwords, o.lexicon, o.backend,
                                             o.backend_timeout, o.k, o.temperature,
                                             o.max_new, o.seed, m));
        pcfg.n_requested = o.n;
        pcfg.threshold = o.threshold;
        pcfg.strict_threshold = o.strict;
        pcfg.seed = ecfg.pipeline_seed;
        pcfg.validate();
        paraphrase = [&](const paragen::augment::LabeledDoc& d, std::uint64_t idx) {
            const auto sentence = paragen::corpus::Sentence::from_raw(d.text);
            const auto set = paragen::scoring::build_candidate_set(
                sentence, *stack->generator, *stack->embedder, stack->corruption,
                stack->lexicon, pcfg, idx);
            std::vector<std::string> texts;
            for (const auto& c : paragen::scoring::select_top_m(set, o.per_doc))
                texts.push_back(c.text);
            return texts;
        };
    }

    const auto report =
        paragen::augment::run_experiment(train_docs, test_docs, ecfg, paraphrase);
    std::ofstream out(o.out, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write report: " + o.out);
    out << paragen::augment::report_to_json(report) << '\n';
    if (!out.flush()) throw InputError("cannot write report: " + o.out);
    m.outputs["report"] = o.out;

    char line[160];
    std::snprintf(line, sizeof line,
                  "%s: acc %.4f -> %.4f (%+.2f%%), f1 %.4f -> %.4f (%+.2f%%), "
                  "%d paraphrases added\n",
                  report.classifier.c_str(), report.baseline.accuracy,
                  report.enhanced.accuracy, report.increment_acc_pct,
                  report.baseline.f1, report.enhanced.f1, report.increment_f1_pct,
                  report.augmented_docs);
    std::cout << line;
}

// --------------------------------------------------------------- dispatch

int dispatch(const std::string& subcommand, const std::string& manifest_path,
             const json& config, int jobs,
             const std::function<void(RunManifest&)>& body) {
    RunManifest m;
    m.subcommand = subcommand;
    m.config = config;
    m.config["jobs"] = jobs;
    const auto t0 = std::chrono::steady_clock::now();
    int code = 0;
    try {
        body(m);
    } catch (const InputError& e) {
        m.status = "error";
        m.error = e.what();
        code = 2;
    } catch (const NumericError& e) {
        m.status = "error";
        m.error = e.what();
        code = 3;
    } catch (const BackendError& e) {
        m.status = "error";
        m.error = e.what();
        code = 4;
    } catch (const std::exception& e) {
        m.status = "error";
        m.error = e.what();
        code = 1;
    }
    m.exit_code = code;
    m.timings_seconds["total"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    try {
        m.save(manifest_path);
    } catch (const std::exception& e) {
        std::cerr << "warning: " << e.what() << '\n';
        if (code == 0) code = 2;
    }
    if (code != 0) std::cerr << "error: " << m.error << '\n';
    return code;
}

std::string resolve_manifest_path(const std::string& flag,
                                  const std::string& primary_output,
                                  bool output_is_dir) {
    if (!flag.empty()) return flag;
    if (primary_output.empty()) return "paragen.manifest.json";
    return paragen::manifest::default_manifest_path(primary_output, output_is_dir);
}

// One entry point for fresh runs and replays: both paths reconstruct the
// options from JSON, so a replay exercises exactly the code a run did.
int execute(const std::string& subcommand, const json& config,
            const std::string& manifest_flag, const std::string& out_dir,
            int jobs) {
    if (!out_dir.empty()) std::filesystem::create_directories(out_dir);
    if (subcommand == "prepare") {
        auto o = PrepareOptions::from_json(config);
        if (!out_dir.empty()) o.out = out_dir;
        const auto path = resolve_manifest_path(manifest_flag, o.out, true);
        return dispatch(subcommand, path, o.to_json(), jobs,
                        [&](RunManifest& m) { run_prepare(o, m); });
    }
    if (subcommand == "train") {
        auto o = TrainOptions::from_json(config);
        o.out = remap(o.out, out_dir);
        o.log = remap(o.log, out_dir);
        const auto path = resolve_manifest_path(manifest_flag, o.out, false);
        return dispatch(subcommand, path, o.to_json(), jobs,
                        [&](RunManifest& m) { run_train(o, m); });
    }
    if (subcommand == "generate") {
        auto o = GenerateOptions::from_json(config);
        o.out = remap(o.out, out_dir);
        const auto path = resolve_manifest_path(manifest_flag, o.out, false);
        return dispatch(subcommand, path, o.to_json(), jobs,
                        [&](RunManifest& m) { run_generate(o, m); });
    }
    if (subcommand == "evaluate") {
        auto o = EvaluateOptions::from_json(config);
        o.out = remap(o.out, out_dir);
        const auto path = resolve_manifest_path(manifest_flag, o.out, false);
        return dispatch(subcommand, path, o.to_json(), jobs,
                        [&](RunManifest& m) { run_evaluate(o, m); });
    }
    if (subcommand == "augment") {
        auto o = AugmentOptions::from_json(config);
        o.out = remap(o.out, out_dir);
        const auto path = resolve_manifest_path(manifest_flag, o.out, false);
        return dispatch(subcommand, path, o.to_json(), jobs,
                        [&](RunManifest& m) { run_augment(o, m); });
    }
    throw InputError("manifest names an unknown subcommand: " + subcommand);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "Self-contained paraphrase pipeline: corrupt sentences into keyword "
        "skeletons, train a small decoder-only language model to reconstruct "
        "them, sample paraphrase candidates, filter and score them, and "
        "measure downstream classification lift. File formats are documented "
        "in docs/formats.md and in each option's help text."};
    app.require_subcommand(1);
    int jobs = 0;
    app.add_option("--jobs", jobs,
                   "cap parallel worker threads (0 = hardware default); "
                   "thread count never changes results");

    PrepareOptions prep;
    std::string prep_manifest;
    auto* sub_prepare = app.add_subcommand(
        "prepare", "Build vocabulary, idf table, and encoded train/valid shards "
                   "from a plain-text corpus (one sentence per line)");
    ConfigBinder prep_cfg(sub_prepare);
    prep_cfg.opt(prep.corpus, "--corpus", "plain text corpus, one sentence per line");
    prep_cfg.opt(prep.stopwords, "--stopwords",
                 "stop-word list, one token per line, '#' comments");
    prep_cfg.opt(prep.lexicon, "--lexicon",
                 "synonym lexicon, word<TAB>syn1,syn2 per line (optional)");
    prep_cfg.opt(prep.out, "--out", "output directory for vocab.tsv, idf.tsv, "
                                    "train.ids, valid.ids, stats.json");
    prep_cfg.opt(prep.seed, "--seed", "global seed; all streams derive from it");
    prep_cfg.opt(prep.min_freq, "--min-freq", "minimum token frequency for the vocabulary");
    prep_cfg.opt(prep.train_frac, "--train-frac", "train split fraction in (0, 1)");
    prep_cfg.opt(prep.shuffle_prob, "--shuffle-prob",
                 "per-example probability of shuffling the corrupted source");
    prep_cfg.opt(prep.synonym_prob, "--synonym-prob",
                 "per-token probability of synonym replacement in the source");
    prep_cfg.opt(prep.max_len, "--max-len",
                 "maximum encoded length; longer targets are truncated");
    sub_prepare->add_option("--manifest", prep_manifest,
                            "manifest path (default: <out>/manifest.json)");

    TrainOptions trn;
    std::string trn_manifest;
    auto* sub_train = app.add_subcommand(
        "train", "Train the reconstruction model on a prepared directory; "
                 "writes a binary checkpoint and a per-epoch CSV log");
    ConfigBinder trn_cfg(sub_train);
    trn_cfg.opt(trn.data, "--data", "directory produced by prepare");
    trn_cfg.opt(trn.out, "--out", "checkpoint output path");
    trn_cfg.opt(trn.log, "--log", "CSV log path (default: <out>.log.csv)");
    trn_cfg.opt(trn.seed, "--seed", "global seed; all streams derive from it");
    trn_cfg.opt(trn.d_model, "--d-model", "embedding width");
    trn_cfg.opt(trn.n_heads, "--n-heads", "attention heads");
    trn_cfg.opt(trn.n_layers, "--n-layers", "transformer blocks");
    trn_cfg.opt(trn.d_ffn, "--d-ffn", "feed-forward width");
    trn_cfg.opt(trn.max_len, "--max-len", "positional capacity");
    trn_cfg.opt(trn.dropout, "--dropout", "dropout probability");
    trn_cfg.opt(trn.lr, "--lr", "peak learning rate");
    trn_cfg.opt(trn.batch_size, "--batch-size", "examples per step");
    trn_cfg.opt(trn.epochs, "--epochs", "maximum epochs");
    trn_cfg.opt(trn.patience, "--patience",
                "non-improving validations tolerated before stopping");
    trn_cfg.flag(trn.target_only, "--target-only",
                 "restrict the loss to tokens after the separator");
    trn_cfg.opt(trn.warmup_frac, "--warmup-frac",
                "fraction of steps under linear warmup");
    sub_train->add_option("--manifest", trn_manifest,
                          "manifest path (default: <out>.manifest.json)");

    GenerateOptions gen;
    std::string gen_manifest;
    auto* sub_generate = app.add_subcommand(
        "generate", "Sample paraphrase candidates for each input sentence and "
                    "write one JSON record per sentence (JSONL)");
    ConfigBinder gen_cfg(sub_generate);
    gen_cfg.opt(gen.input, "--input", "input sentences, one per line");
    gen_cfg.opt(gen.out, "--out", "candidate sets output (JSONL)");
    gen_cfg.opt(gen.checkpoint, "--checkpoint", "trained model checkpoint");
    gen_cfg.opt(gen.vocab, "--vocab", "vocab.tsv from prepare");
    gen_cfg.opt(gen.idf, "--idf", "idf.tsv from prepare");
    gen_cfg.opt(gen.stopwords, "--stopwords",
                "stop-word list used to build the prompt skeleton");
    gen_cfg.opt(gen.lexicon, "--lexicon", "synonym lexicon (optional)");
    gen_cfg.opt(gen.backend, "--backend",
                "shell command for an external line-delimited JSON backend; "
                "replaces the local model");
    gen_cfg.opt(gen.n, "--n", "candidates requested per sentence");
    gen_cfg.opt(gen.k, "--k", "top-k cutoff for sampling");
    gen_cfg.opt(gen.max_new, "--max-new", "maximum generated tokens");
    gen_cfg.opt(gen.temperature, "--temperature", "softmax temperature");
    gen_cfg.opt(gen.threshold, "--threshold",
                "minimum cosine similarity to the original");
    gen_cfg.flag(gen.strict, "--strict-threshold",
                 "reject candidates exactly at the threshold");
    gen_cfg.opt(gen.source_shuffle, "--source-shuffle",
                "prompt shuffle probability (default 0: deterministic skeleton)");
    gen_cfg.opt(gen.source_synonym, "--source-synonym",
                "prompt synonym-replacement probability");
    gen_cfg.opt(gen.seed, "--seed", "global seed; all streams derive from it");
    gen_cfg.opt(gen.backend_timeout, "--backend-timeout",
                "seconds to wait for each backend reply");
    sub_generate->add_option("--manifest", gen_manifest,
                             "manifest path (default: <out>.manifest.json)");

    EvaluateOptions evl;
    std::string evl_manifest;
    auto* sub_evaluate = app.add_subcommand(
        "evaluate", "Score candidate sets against references (TSV with header "
                    "question1/question2/is_duplicate) and write a metric "
                    "report (JSON); a table is printed to stdout");
    ConfigBinder evl_cfg(sub_evaluate);
    evl_cfg.opt(evl.candidates, "--candidates", "candidate sets (JSONL) from generate");
    evl_cfg.opt(evl.references, "--references",
                "reference pairs TSV; question1 must match the generated "
                "originals");
    evl_cfg.opt(evl.protocol, "--protocol",
                "best_candidate (max per metric) or top3_mean");
    evl_cfg.opt(evl.lexicon, "--lexicon",
                "synonym lexicon for the unigram-alignment metric (optional)");
    evl_cfg.opt(evl.out, "--out", "metric report output (JSON)");
    evl_cfg.opt(evl.bleu_max_n, "--bleu-max-n", "highest n-gram order");
    sub_evaluate->add_option("--manifest", evl_manifest,
                             "manifest path (default: <out>.manifest.json)");

    AugmentOptions aug;
    std::string aug_manifest;
    auto* sub_augment = app.add_subcommand(
        "augment", "Train a classifier on label<TAB>text rows with and without "
                   "generated paraphrases and report the percent change");
    ConfigBinder aug_cfg(sub_augment);
    aug_cfg.opt(aug.train, "--train", "training docs, label<TAB>text per line");
    aug_cfg.opt(aug.test, "--test", "test docs, label<TAB>text per line");
    aug_cfg.opt(aug.classifier, "--classifier", "nbsvm or tfidf_rf");
    aug_cfg.opt(aug.out, "--out", "classifier report output (JSON)");
    aug_cfg.opt(aug.per_doc, "--per-doc", "paraphrases added per training doc");
    aug_cfg.opt(aug.max_n, "--max-n", "n-gram order of the feature space");
    aug_cfg.opt(aug.alpha, "--alpha", "nbsvm count smoothing");
    aug_cfg.opt(aug.beta, "--beta", "nbsvm interpolation toward raw weights");
    aug_cfg.opt(aug.c, "--c", "nbsvm inverse regularization strength");
    aug_cfg.opt(aug.clf_lr, "--clf-lr", "nbsvm learning rate");
    aug_cfg.opt(aug.clf_epochs, "--clf-epochs", "nbsvm training epochs");
    aug_cfg.opt(aug.trees, "--trees", "forest size");
    aug_cfg.opt(aug.max_depth, "--max-depth", "tree depth cap (0 = unbounded)");
    aug_cfg.opt(aug.mtry, "--mtry", "features tried per node (0 = sqrt rule)");
    aug_cfg.opt(aug.min_leaf, "--min-leaf", "minimum samples per leaf");
    aug_cfg.opt(aug.seed, "--seed", "global seed; all streams derive from it");
    aug_cfg.opt(aug.checkpoint, "--checkpoint",
                "trained checkpoint for the paraphrase pipeline (optional)");
    aug_cfg.opt(aug.vocab, "--vocab", "vocab.tsv (with --checkpoint)");
    aug_cfg.opt(aug.idf, "--idf", "idf.tsv (with --checkpoint)");
    aug_cfg.opt(aug.stopwords, "--stopwords", "stop-word list (with a pipeline)");
    aug_cfg.opt(aug.lexicon, "--lexicon", "synonym lexicon (optional)");
    aug_cfg.opt(aug.backend, "--backend", "external backend command (optional)");
    aug_cfg.opt(aug.n, "--n", "candidates requested per doc");
    aug_cfg.opt(aug.k, "--k", "top-k cutoff for sampling");
    aug_cfg.opt(aug.max_new, "--max-new", "maximum generated tokens");
    aug_cfg.opt(aug.temperature, "--temperature", "softmax temperature");
    aug_cfg.opt(aug.threshold, "--threshold", "minimum cosine similarity");
    aug_cfg.flag(aug.strict, "--strict-threshold",
                 "reject candidates exactly at the threshold");
    aug_cfg.opt(aug.backend_timeout, "--backend-timeout",
                "seconds to wait for each backend reply");
    sub_augment->add_option("--manifest", aug_manifest,
                            "manifest path (default: <out>.manifest.json)");

    std::string replay_manifest, replay_out_dir;
    auto* sub_replay = app.add_subcommand(
        "replay", "Re-execute a finished run from its manifest; outputs are "
                  "byte-identical to the original run");
    sub_replay->add_option("manifest", replay_manifest, "manifest to replay")
        ->required();
    sub_replay->add_option("--out-dir", replay_out_dir,
                           "redirect outputs into this directory instead of "
                           "overwriting the originals");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    if (jobs > 0) paragen::kernels::set_threads(jobs);

    try {
        if (sub_prepare->parsed()) {
            prep_cfg.overlay();
            return execute("prepare", prep.to_json(), prep_manifest, "", jobs);
        }
        if (sub_train->parsed()) {
            trn_cfg.overlay();
            return execute("train", trn.to_json(), trn_manifest, "", jobs);
        }
        if (sub_generate->parsed()) {
            gen_cfg.overlay();
            return execute("generate", gen.to_json(), gen_manifest, "", jobs);
        }
        if (sub_evaluate->parsed()) {
            evl_cfg.overlay();
            return execute("evaluate", evl.to_json(), evl_manifest, "", jobs);
        }
        if (sub_augment->parsed()) {
            aug_cfg.overlay();
            return execute("augment", aug.to_json(), aug_manifest, "", jobs);
        }
        if (sub_replay->parsed()) {
            const auto original = RunManifest::load(replay_manifest);
            return execute(original.subcommand, original.config, "",
                           replay_out_dir, jobs);
        }
    } catch (const InputError& e) {
        // Configuration never resolved, so no run started and no manifest
        // location exists yet.
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    std::cerr << "error: no subcommand given\n";
    return 2;
}
