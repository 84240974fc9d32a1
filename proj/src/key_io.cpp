#include <fstream>
#include <iterator>

#include "json.hpp"

#include "qmark/error.hpp"
#include "qmark/watermark.hpp"

namespace qmark {

using nlohmann::json;

std::string key_to_json(const WatermarkKey& key) {
    const std::span<const int> bits = key.signature.bits();
    const json j = {
        {"version", key.version},
        {"seed", key.params.seed},
        {"alpha", key.params.alpha},
        {"beta", key.params.beta},
        {"pool_size_per_layer", key.params.pool_size},
        {"bits_per_layer", key.params.bits_per_layer},
        {"signature", std::vector<int>(bits.begin(), bits.end())},
        {"original_bundle_hash", to_hex(key.original_bundle_hash)},
        {"created_at", key.created_at},
    };
    return j.dump(2) + "\n";
}

WatermarkKey key_from_json(std::string_view text) {
    try {
        const json j = json::parse(text);
        WatermarkKey key;
        key.version = j.at("version").get<int>();
        key.params.seed = j.at("seed").get<std::uint64_t>();
        key.params.alpha = j.at("alpha").get<double>();
        key.params.beta = j.at("beta").get<double>();
        key.params.pool_size = j.at("pool_size_per_layer").get<std::size_t>();
        key.params.bits_per_layer = j.at("bits_per_layer").get<std::size_t>();
        key.signature = Signature(j.at("signature").get<std::vector<int>>());
        const auto hash = digest_from_hex(j.at("original_bundle_hash").get<std::string>());
        if (!hash) throw Error(Errc::malformed_key, "malformed key: original_bundle_hash is not 64 hex digits");
        key.original_bundle_hash = *hash;
        key.created_at = j.value("created_at", std::string{});
        return key;
    } catch (const json::exception& e) {
        throw Error(Errc::malformed_key, std::string("malformed key: ") + e.what());
    } catch (const Error& e) {
        if (e.code() == Errc::malformed_key) throw;
        throw Error(Errc::malformed_key, std::string("malformed key: ") + e.what());
    }
}

void save_key(const WatermarkKey& key, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error(Errc::io_error, "cannot open '" + path.string() + "' for writing");
    out << key_to_json(key);
    if (!out) throw Error(Errc::io_error, "failed writing '" + path.string() + "'");
}

WatermarkKey load_key(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::io_error, "cannot open '" + path.string() + "'");
    const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return key_from_json(text);
}

std::string report_to_json(const VerificationReport& report) {
    json layers = json::array();
    for (const LayerVerification& l : report.per_layer) {
        layers.push_back({{"layer_name", l.layer_name}, {"inserted", l.inserted}, {"matched", l.matched}});
    }
    const json j = {
        {"total_bits", report.total_bits},
        {"matched_bits", report.matched_bits},
        {"wer", report.wer},
        {"log10_p_value", report.log10_p_value},
        {"per_layer", std::move(layers)},
    };
    return j.dump(2) + "\n";
}

VerificationReport report_from_json(std::string_view text) {
    try {
        const json j = json::parse(text);
        VerificationReport r;
        r.total_bits = j.at("total_bits").get<std::size_t>();
        r.matched_bits = j.at("matched_bits").get<std::size_t>();
        r.wer = j.at("wer").get<double>();
        r.log10_p_value = j.at("log10_p_value").get<double>();
        for (const json& l : j.at("per_layer")) {
            r.per_layer.push_back({l.at("layer_name").get<std::string>(), l.at("inserted").get<std::size_t>(),
                                   l.at("matched").get<std::size_t>()});
        }
        return r;
    } catch (const json::exception& e) {
        throw Error(Errc::invalid_argument, std::string("malformed report: ") + e.what());
    }
}

}  // namespace qmark
