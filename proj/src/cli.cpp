#include "qmark/cli.hpp"

#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "qmark/attacks.hpp"
#include "qmark/bundle.hpp"
#include "qmark/error.hpp"
#include "qmark/quality.hpp"
#include "qmark/scoring.hpp"
#include "qmark/stats.hpp"
#include "qmark/watermark.hpp"

namespace qmark::cli {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr std::size_t kDefaultBitsInt4 = 40;
constexpr std::size_t kDefaultBitsInt8 = 300;

struct Globals {
    unsigned threads = 1;
    std::string log_level = "warn";
    bool json_output = false;
};

struct GenOptions {
    std::size_t layers = 4, rows = 512, cols = 512;
    int bits = 4;
    std::uint64_t seed = 1;
    std::string out;
};

struct InsertOptions {
    std::string bundle, signature_file, out, key_out, report_out, created_at;
    std::optional<std::uint64_t> signature_seed;
    std::optional<std::size_t> bits_per_layer;
    std::uint64_t seed = 100;
    double alpha = 0.5, beta = 0.5;
    std::size_t pool_ratio = 50;
};

struct ExtractOptions {
    std::string suspect, original, key, report_out;
};

struct StrengthOptions {
    std::uint64_t matched = 0, total = 0;
};

struct AttackOptions {
    std::string bundle, original, key, csv_out, activation_source = "quantized";
    std::vector<std::size_t> per_layer;
    std::size_t seeds = 20;
    double alpha = 1.0, beta = 1.5;
    std::uint64_t seed = 22;
    std::size_t pool_ratio = 50, pool_size = 0;
};

struct ForgeOptions {
    std::string bundle, key, original;
    double min_wer = 95.0, max_log10_p = -6.0;
};

struct SweepOptions {
    std::string bundle;
    std::size_t from = 50, to = 200, step = 50;
    std::uint64_t seed = 100, signature_seed = 1;
    double alpha = 0.5, beta = 0.5;
    std::size_t pool_ratio = 50, pool_size = 0;
};

struct IntegrityOptions {
    std::vector<std::string> suspects;
    std::string original, key;
    double min_wer = 95.0;
};

struct PoolsOptions {
    std::string bundle, out;
    double alpha = 0.5, beta = 0.5;
    std::size_t pool_size = 0;
};

// "9.09e-13" rendered from the log10 value, so it works past double underflow.
std::string scientific_from_log10(double log10_value) {
    double exponent = std::floor(log10_value);
    double mantissa = std::pow(10.0, log10_value - exponent);
    if (std::round(mantissa * 100.0) >= 1000.0) {
        mantissa /= 10.0;
        exponent += 1.0;
    }
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.2fe%+03.0f", mantissa, exponent);
    return buf;
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::io_error, "cannot open '" + path.string() + "'");
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error(Errc::io_error, "cannot open '" + path.string() + "' for writing");
    out << text;
    if (!out) throw Error(Errc::io_error, "failed writing '" + path.string() + "'");
}

// Accepts whitespace, comma or JSON-array separated +1/-1 values.
Signature read_signature_file(const fs::path& path) {
    std::string text = read_text(path);
    std::replace_if(text.begin(), text.end(), [](char c) { return c == '[' || c == ']' || c == ','; }, ' ');
    std::istringstream in(text);
    std::vector<int> bits;
    std::string token;
    while (in >> token) {
        if (token == "1" || token == "+1") {
            bits.push_back(1);
        } else if (token == "-1") {
            bits.push_back(-1);
        } else {
            throw Error(Errc::invalid_argument, "signature file: unexpected token '" + token + "'");
        }
    }
    return Signature(std::move(bits));
}

void require_distinct(const std::string& output, std::initializer_list<std::string> inputs) {
    if (output.empty()) return;
    for (const std::string& in : inputs) {
        if (in.empty()) continue;
        std::error_code ec;
        if (output == in || (fs::exists(output) && fs::equivalent(output, in, ec))) {
            throw Error(Errc::invalid_argument, "output '" + output + "' would overwrite an input file");
        }
    }
}

json report_json(const VerificationReport& r) { return json::parse(report_to_json(r)); }

json quality_json(const QualityProxy& q) {
    return {{"modified_count", q.modified_count},
            {"max_abs_delta", q.max_abs_delta},
            {"salient_hit_fraction", q.salient_hit_fraction},
            {"weighted_perturbation", q.weighted_perturbation}};
}

std::size_t default_bits_per_layer(const ModelBundle& bundle) {
    const int bits = bundle.layers.front().bit_width;
    for (const QuantLayer& l : bundle.layers) {
        if (l.bit_width != bits) {
            throw Error(Errc::invalid_argument, "mixed bit widths: pass --bits-per-layer explicitly");
        }
    }
    return bits == 4 ? kDefaultBitsInt4 : kDefaultBitsInt8;
}

std::string created_at_or_now(const std::string& flag) {
    if (!flag.empty()) return flag;
    if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH")) {
        const std::time_t t = static_cast<std::time_t>(std::strtoll(epoch, nullptr, 10));
        std::tm utc{};
        gmtime_r(&t, &utc);
        char buf[32];
        std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &utc);
        return buf;
    }
    return rfc3339_now();
}

int cmd_gen(const Globals& g, const GenOptions& o, std::ostream& out) {
    SyntheticSpec spec{o.layers, o.rows, o.cols, o.bits, o.seed};
    const ModelBundle bundle = generate_synthetic_bundle(spec);
    save_bundle(bundle, o.out);
    const std::string hash = to_hex(content_hash(bundle));
    if (g.json_output) {
        out << json{{"out", o.out}, {"layers", bundle.size()}, {"content_hash", hash}}.dump() << "\n";
    } else {
        out << "wrote " << o.out << ": " << bundle.size() << " layers " << o.rows << "x" << o.cols
            << " INT" << o.bits << ", content hash " << hash << "\n";
    }
    return 0;
}

int cmd_insert(const Globals& g, const InsertOptions& o, std::ostream& out) {
    if (o.signature_file.empty() == !o.signature_seed.has_value()) {
        throw Error(Errc::invalid_argument, "pass exactly one of --signature-file or --signature-seed");
    }
    require_distinct(o.out, {o.bundle, o.signature_file});
    require_distinct(o.key_out, {o.bundle, o.signature_file, o.out});
    require_distinct(o.report_out, {o.bundle, o.signature_file, o.out, o.key_out});

    const ModelBundle bundle = load_bundle(o.bundle);
    Signature signature;
    if (!o.signature_file.empty()) {
        signature = read_signature_file(o.signature_file);
        if (o.bits_per_layer && *o.bits_per_layer * bundle.size() != signature.size()) {
            throw Error(Errc::signature_length, "signature file length does not equal --bits-per-layer x layers");
        }
    } else {
        const std::size_t bits = o.bits_per_layer.value_or(default_bits_per_layer(bundle));
        signature = Signature::from_seed(*o.signature_seed, bits * bundle.size());
    }
    const std::size_t bits_per_layer = signature.size() / bundle.size();
    InsertParams params{o.seed, o.alpha, o.beta, o.pool_ratio * bits_per_layer, created_at_or_now(o.created_at)};
    spdlog::info("inserting {} bits ({} per layer, pool {})", signature.size(), bits_per_layer, params.pool_size);
    const InsertResult result = insert(bundle, signature, params, g.threads);
    const QualityProxy quality = quality_proxy(bundle, result.bundle);

    save_bundle(result.bundle, o.out);
    save_key(result.key, o.key_out);
    json summary = {{"out", o.out},
                    {"key_out", o.key_out},
                    {"total_bits", signature.size()},
                    {"bits_per_layer", bits_per_layer},
                    {"pool_size_per_layer", params.pool_size},
                    {"original_bundle_hash", to_hex(result.key.original_bundle_hash)},
                    {"quality", quality_json(quality)}};
    if (!o.report_out.empty()) write_text(o.report_out, summary.dump(2) + "\n");
    if (g.json_output) {
        out << summary.dump() << "\n";
    } else {
        out << "inserted " << signature.size() << " bits into " << bundle.size() << " layers -> " << o.out
            << " (key " << o.key_out << "), weighted perturbation " << quality.weighted_perturbation << "\n";
    }
    return 0;
}

int cmd_extract(const Globals& g, const ExtractOptions& o, std::ostream& out) {
    require_distinct(o.report_out, {o.suspect, o.original, o.key});
    const ModelBundle suspect = load_bundle(o.suspect);
    const ModelBundle original = load_bundle(o.original);
    const WatermarkKey key = load_key(o.key);
    const VerificationReport report = extract(suspect, original, key, g.threads);
    if (!o.report_out.empty()) write_text(o.report_out, report_to_json(report));
    if (g.json_output) {
        out << report_json(report).dump() << "\n";
    } else {
        char line[160];
        std::snprintf(line, sizeof(line), "WER %.2f%% (%zu/%zu bits), P_c %s (log10 %.4f)\n", report.wer,
                      report.matched_bits, report.total_bits, scientific_from_log10(report.log10_p_value).c_str(),
                      report.log10_p_value);
        out << line;
    }
    return 0;
}

int cmd_strength(const Globals& g, const StrengthOptions& o, std::ostream& out) {
    const StrengthResult r = watermark_strength(o.matched, o.total);
    if (g.json_output) {
        out << json{{"matched", r.matched}, {"total", r.total}, {"log10_p", r.log10_p}, {"p_value", r.p_value}}.dump()
            << "\n";
    } else {
        char line[96];
        std::snprintf(line, sizeof(line), "%s\nlog10 %.6f\n", scientific_from_log10(r.log10_p).c_str(), r.log10_p);
        out << line;
    }
    return 0;
}

struct OwnerFiles {
    ModelBundle watermarked, original;
    WatermarkKey key;
    WatermarkLocations locations;
};

OwnerFiles load_owner(const std::string& bundle, const std::string& original, const std::string& key,
                      unsigned threads) {
    OwnerFiles f{load_bundle(bundle), load_bundle(original), load_key(key), {}};
    if (!same_shape(f.watermarked, f.original)) {
        throw Error(Errc::shape_mismatch, "watermarked and original bundles differ in shape");
    }
    f.locations = derive_locations(f.original, f.key, threads);
    return f;
}

void emit_csv(const std::string& text, const std::string& path, std::ostream& out) {
    if (path.empty()) {
        out << text;
    } else {
        write_text(path, text);
    }
}

std::string csv_row(const std::string& attack, std::size_t m, std::uint64_t seed, const AttackOutcome& r) {
    char line[200];
    std::snprintf(line, sizeof(line), "%s,%zu,%llu,%.6f,%.6f,%.9g\n", attack.c_str(), m,
                  static_cast<unsigned long long>(seed), r.report.wer, r.report.log10_p_value,
                  r.damage.weighted_perturbation);
    return line;
}

constexpr const char* kCsvHeader = "attack,per_layer_count,seed,wer,log10_p,damage_proxy\n";

int cmd_attack_overwrite(const Globals& g, const AttackOptions& o, std::ostream& out) {
    require_distinct(o.csv_out, {o.bundle, o.original, o.key});
    if (o.per_layer.empty()) throw Error(Errc::invalid_argument, "--per-layer is required");
    const OwnerFiles f = load_owner(o.bundle, o.original, o.key, g.threads);
    const OwnerContext owner{f.watermarked, f.original, f.key, &f.locations};
    std::string csv = kCsvHeader;
    for (std::size_t m : o.per_layer) {
        for (std::uint64_t seed = 1; seed <= o.seeds; ++seed) {
            const AttackOutcome r = overwrite_attack(owner, m, seed, g.threads);
            csv += csv_row("overwrite", m, seed, r);
        }
    }
    emit_csv(csv, o.csv_out, out);
    return 0;
}

int cmd_attack_rewatermark(const Globals& g, const AttackOptions& o, std::ostream& out) {
    require_distinct(o.csv_out, {o.bundle, o.original, o.key});
    if (o.per_layer.empty()) throw Error(Errc::invalid_argument, "--per-layer is required");
    if (o.activation_source != "quantized" && o.activation_source != "stored") {
        throw Error(Errc::invalid_argument, "--activation-source must be 'quantized' or 'stored'");
    }
    const OwnerFiles f = load_owner(o.bundle, o.original, o.key, g.threads);
    const OwnerContext owner{f.watermarked, f.original, f.key, &f.locations};
    std::string csv = kCsvHeader;
    for (std::size_t m : o.per_layer) {
        for (std::uint64_t i = 0; i < std::max<std::size_t>(o.seeds, 1); ++i) {
            RewatermarkParams p{o.alpha, o.beta, o.seed + i, o.activation_source == "quantized", o.pool_ratio,
                                o.pool_size};
            const AttackOutcome r = rewatermark_attack(owner, m, p, g.threads);
            csv += csv_row("rewatermark", m, p.seed, r);
        }
    }
    emit_csv(csv, o.csv_out, out);
    return 0;
}

int cmd_forge(const Globals& g, const ForgeOptions& o, std::ostream& out) {
    const ModelBundle suspect = load_bundle(o.bundle);
    const ModelBundle original = load_bundle(o.original);
    const WatermarkKey key = load_key(o.key);
    const ForgeVerdict v = forge_evaluate(suspect, {key, original, nullptr}, {o.min_wer, o.max_log10_p}, g.threads);
    if (g.json_output) {
        json j = {{"verdict", v.accepted ? "accept" : "reject"}, {"reason", v.reason}};
        if (v.report.total_bits > 0) j["report"] = report_json(v.report);
        out << j.dump() << "\n";
    } else {
        out << (v.accepted ? "accept" : "reject") << ": " << v.reason;
        if (v.report.total_bits > 0) out << " (WER " << v.report.wer << "%)";
        out << "\n";
    }
    return 0;
}

int cmd_capacity(const Globals& g, const SweepOptions& o, std::ostream& out) {
    if (o.step == 0 || o.from == 0 || o.from > o.to) {
        throw Error(Errc::invalid_argument, "capacity sweep needs 0 < --from <= --to and --step > 0");
    }
    const ModelBundle bundle = load_bundle(o.bundle);
    json rows = json::array();
    std::string csv = "bits_per_layer,wer,log10_p,weighted_perturbation,salient_hit_fraction\n";
    for (std::size_t bits = o.from; bits <= o.to; bits += o.step) {
        const Signature sig = Signature::from_seed(o.signature_seed, bits * bundle.size());
        const std::size_t pool = o.pool_size > 0 ? o.pool_size : o.pool_ratio * bits;
        const InsertResult ins = insert(bundle, sig, {o.seed, o.alpha, o.beta, pool, "-"}, g.threads);
        const VerificationReport rep = extract_at(ins.bundle, bundle, ins.locations);
        const QualityProxy q = quality_proxy(bundle, ins.bundle);
        char line[160];
        std::snprintf(line, sizeof(line), "%zu,%.6f,%.6f,%.9g,%.6f\n", bits, rep.wer, rep.log10_p_value,
                      q.weighted_perturbation, q.salient_hit_fraction);
        csv += line;
        rows.push_back({{"bits_per_layer", bits}, {"report", report_json(rep)}, {"quality", quality_json(q)}});
    }
    if (g.json_output) {
        out << rows.dump() << "\n";
    } else {
        out << csv;
    }
    return 0;
}

int cmd_integrity(const Globals& g, const IntegrityOptions& o, std::ostream& out) {
    const ModelBundle original = load_bundle(o.original);
    const WatermarkKey key = load_key(o.key);
    const WatermarkLocations locations = derive_locations(original, key, g.threads);
    json rows = json::array();
    for (const std::string& path : o.suspects) {
        const ModelBundle suspect = load_bundle(path);
        const VerificationReport r = extract_at(suspect, original, locations);
        const bool owned = r.wer >= o.min_wer;
        rows.push_back({{"suspect", path}, {"wer", r.wer}, {"log10_p_value", r.log10_p_value}, {"owned", owned}});
        if (!g.json_output) {
            char line[64];
            std::snprintf(line, sizeof(line), "  WER %7.2f%%  log10 p %10.3f  %s\n", r.wer, r.log10_p_value,
                          owned ? "watermarked" : "not watermarked");
            out << path << line;
        }
    }
    if (g.json_output) out << rows.dump() << "\n";
    return 0;
}

int cmd_pools(const Globals& g, const PoolsOptions& o, std::ostream& out) {
    require_distinct(o.out, {o.bundle});
    const ModelBundle bundle = load_bundle(o.bundle);
    const std::vector<ScoreMap> maps = score_bundle(bundle, o.alpha, o.beta, g.threads);
    json dump = json::object();
    for (const ScoreMap& map : maps) {
        const CandidatePool pool = build_candidate_pool(map, o.pool_size);
        json entries = json::array();
        for (const Position& p : pool.positions) entries.push_back({p.row, p.col, map.at(p.row, p.col)});
        dump[map.layer_name] = std::move(entries);
    }
    if (o.out.empty()) {
        out << dump.dump() << "\n";
    } else {
        write_text(o.out, dump.dump() + "\n");
    }
    return 0;
}

void print_error(std::ostream& err, std::string_view code, const std::string& message) {
    err << json{{"error", code}, {"message", message}}.dump() << "\n";
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Quantized-weight watermark toolkit"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--threads", g.threads, "Worker threads for per-layer work")->check(CLI::Range(1u, 1024u));
    app.add_option("--log-level", g.log_level, "trace|debug|info|warn|error|off");
    app.add_flag("--json", g.json_output, "Machine-readable JSON on stdout");

    GenOptions gen;
    auto* gen_cmd = app.add_subcommand("gen-synthetic", "Generate a deterministic synthetic bundle");
    gen_cmd->add_option("--layers", gen.layers)->check(CLI::PositiveNumber);
    gen_cmd->add_option("--rows", gen.rows)->check(CLI::PositiveNumber);
    gen_cmd->add_option("--cols", gen.cols)->check(CLI::PositiveNumber);
    gen_cmd->add_option("--bits", gen.bits)->check(CLI::IsMember({4, 8}));
    gen_cmd->add_option("--seed", gen.seed);
    gen_cmd->add_option("--out", gen.out)->required();

    InsertOptions ins;
    auto* ins_cmd = app.add_subcommand("insert", "Insert a signature and write the watermarked bundle and key");
    ins_cmd->add_option("--bundle", ins.bundle)->required();
    auto* sig_file = ins_cmd->add_option("--signature-file", ins.signature_file);
    auto* sig_seed = ins_cmd->add_option("--signature-seed", ins.signature_seed);
    sig_file->excludes(sig_seed);
    ins_cmd->add_option("--bits-per-layer", ins.bits_per_layer)->check(CLI::PositiveNumber);
    ins_cmd->add_option("--seed", ins.seed);
    ins_cmd->add_option("--alpha", ins.alpha)->check(CLI::NonNegativeNumber);
    ins_cmd->add_option("--beta", ins.beta)->check(CLI::NonNegativeNumber);
    ins_cmd->add_option("--pool-ratio", ins.pool_ratio, "Pool size = ratio x bits per layer")->check(CLI::PositiveNumber);
    ins_cmd->add_option("--out", ins.out)->required();
    ins_cmd->add_option("--key-out", ins.key_out)->required();
    ins_cmd->add_option("--report-out", ins.report_out);
    ins_cmd->add_option("--created-at", ins.created_at, "RFC-3339 timestamp recorded in the key");

    ExtractOptions ext;
    auto* ext_cmd = app.add_subcommand("extract", "Verify a suspect bundle against the owner key");
    ext_cmd->add_option("--suspect", ext.suspect)->required();
    ext_cmd->add_option("--original", ext.original)->required();
    ext_cmd->add_option("--key", ext.key)->required();
    ext_cmd->add_option("--report-out", ext.report_out);

    StrengthOptions str;
    auto* str_cmd = app.add_subcommand("strength", "Chance-match probability of k out of |B| bits");
    str_cmd->add_option("--matched", str.matched)->required();
    str_cmd->add_option("--total", str.total)->required()->check(CLI::PositiveNumber);

    AttackOptions ow, rw;
    auto* attack_cmd = app.add_subcommand("attack", "Run removal attacks against a watermarked bundle");
    attack_cmd->require_subcommand(1);
    auto add_owner_flags = [](CLI::App* cmd, AttackOptions& o) {
        cmd->add_option("--bundle", o.bundle, "Watermarked bundle")->required();
        cmd->add_option("--original", o.original)->required();
        cmd->add_option("--key", o.key)->required();
        cmd->add_option("--per-layer", o.per_layer, "Positions per layer (repeatable)")->required();
        cmd->add_option("--csv-out", o.csv_out);
    };
    auto* ow_cmd = attack_cmd->add_subcommand("overwrite", "Add +1 to random weights");
    add_owner_flags(ow_cmd, ow);
    ow_cmd->add_option("--seeds", ow.seeds, "Attack seeds 1..N")->check(CLI::PositiveNumber);
    auto* rw_cmd = attack_cmd->add_subcommand("rewatermark", "Re-run insertion with attacker parameters");
    add_owner_flags(rw_cmd, rw);
    rw.seeds = 1;
    rw_cmd->add_option("--alpha", rw.alpha)->check(CLI::NonNegativeNumber);
    rw_cmd->add_option("--beta", rw.beta)->check(CLI::NonNegativeNumber);
    rw_cmd->add_option("--seed", rw.seed);
    rw_cmd->add_option("--seeds", rw.seeds, "Run seeds seed..seed+N-1")->check(CLI::PositiveNumber);
    rw_cmd->add_option("--pool-ratio", rw.pool_ratio)->check(CLI::PositiveNumber);
    rw_cmd->add_option("--pool-size", rw.pool_size, "Fixed attacker pool, overrides --pool-ratio");
    rw_cmd->add_option("--activation-source", rw.activation_source, "quantized|stored");

    ForgeOptions forge;
    auto* forge_cmd = app.add_subcommand("forge-eval", "Validate an ownership claim");
    forge_cmd->add_option("--bundle", forge.bundle)->required();
    forge_cmd->add_option("--key", forge.key)->required();
    forge_cmd->add_option("--original", forge.original)->required();
    forge_cmd->add_option("--min-wer", forge.min_wer);
    forge_cmd->add_option("--max-log10-p", forge.max_log10_p);

    SweepOptions sweep;
    auto* sweep_cmd = app.add_subcommand("capacity-sweep", "Insert/extract across signature lengths");
    sweep_cmd->add_option("--bundle", sweep.bundle)->required();
    sweep_cmd->add_option("--from", sweep.from);
    sweep_cmd->add_option("--to", sweep.to);
    sweep_cmd->add_option("--step", sweep.step);
    sweep_cmd->add_option("--seed", sweep.seed);
    sweep_cmd->add_option("--signature-seed", sweep.signature_seed);
    sweep_cmd->add_option("--alpha", sweep.alpha)->check(CLI::NonNegativeNumber);
    sweep_cmd->add_option("--beta", sweep.beta)->check(CLI::NonNegativeNumber);
    sweep_cmd->add_option("--pool-ratio", sweep.pool_ratio)->check(CLI::PositiveNumber);
    sweep_cmd->add_option("--pool-size", sweep.pool_size, "One pool for every length, overrides --pool-ratio");

    IntegrityOptions integ;
    auto* integ_cmd = app.add_subcommand("integrity", "Extract from several suspects with one key");
    integ_cmd->add_option("--suspect", integ.suspects)->required();
    integ_cmd->add_option("--original", integ.original)->required();
    integ_cmd->add_option("--key", integ.key)->required();
    integ_cmd->add_option("--min-wer", integ.min_wer);

    PoolsOptions pools;
    auto* pools_cmd = app.add_subcommand("pools", "Dump candidate pools as JSON (debug)");
    pools_cmd->add_option("--bundle", pools.bundle)->required();
    pools_cmd->add_option("--alpha", pools.alpha)->check(CLI::NonNegativeNumber);
    pools_cmd->add_option("--beta", pools.beta)->check(CLI::NonNegativeNumber);
    pools_cmd->add_option("--pool-size", pools.pool_size)->required()->check(CLI::PositiveNumber);
    pools_cmd->add_option("--out", pools.out);

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(std::move(reversed));
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        print_error(err, "usage", e.what());
        return 2;
    }

    auto logger = std::make_shared<spdlog::logger>("qmark", std::make_shared<spdlog::sinks::stderr_sink_st>());
    logger->set_level(spdlog::level::from_str(g.log_level));
    spdlog::set_default_logger(logger);

    try {
        if (*gen_cmd) return cmd_gen(g, gen, out);
        if (*ins_cmd) return cmd_insert(g, ins, out);
        if (*ext_cmd) return cmd_extract(g, ext, out);
        if (*str_cmd) return cmd_strength(g, str, out);
        if (*ow_cmd) return cmd_attack_overwrite(g, ow, out);
        if (*rw_cmd) return cmd_attack_rewatermark(g, rw, out);
        if (*forge_cmd) return cmd_forge(g, forge, out);
        if (*sweep_cmd) return cmd_capacity(g, sweep, out);
        if (*integ_cmd) return cmd_integrity(g, integ, out);
        if (*pools_cmd) return cmd_pools(g, pools, out);
    } catch (const Error& e) {
        print_error(err, errc_name(e.code()), e.what());
        return 1;
    } catch (const std::exception& e) {
        print_error(err, "internal", e.what());
        return 1;
    }
    return 1;
}

int run(int argc, char** argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run(args, std::cout, std::cerr);
}

}  // namespace qmark::cli
