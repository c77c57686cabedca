#include "gendx/checkpoint.hpp"

#include <cstring>
#include <stdexcept>

#include "gendx/textio.hpp"
#include "internal_json.hpp"

using nlohmann::json;

namespace gendx {

namespace {

constexpr char kMagic[8] = {'G', 'D', 'X', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f64(std::string& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    put_u64(out, bits);
}

struct Reader {
    const std::string& buf;
    std::size_t pos = 0;
    const std::string& path;

    void need(std::size_t n) const {
        if (pos + n > buf.size()) {
            throw std::runtime_error("checkpoint '" + path + "': truncated");
        }
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos++])) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos++])) << (8 * i);
        return v;
    }
    double f64() {
        const std::uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, sizeof(v));
        return v;
    }
    std::string bytes(std::size_t n) {
        need(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

json meta_to_json(const TrainMeta& meta) {
    json j;
    j["seed"] = meta.seed;
    j["iterations_run"] = meta.iterations_run;
    j["best_iteration"] = meta.best_iteration;
    j["best_train_bacc"] = meta.best_train_bacc;
    j["objective"] = meta.objective;
    return j;
}

TrainMeta meta_from_json(const json& j) {
    TrainMeta meta;
    meta.seed = j.at("seed").get<std::uint64_t>();
    meta.iterations_run = j.at("iterations_run").get<std::uint64_t>();
    meta.best_iteration = j.at("best_iteration").get<std::uint64_t>();
    meta.best_train_bacc = j.at("best_train_bacc").get<double>();
    meta.objective = j.at("objective").get<double>();
    return meta;
}

json adam_to_json(const AdamConfig& c) {
    return json{{"alpha", c.alpha}, {"beta1", c.beta1}, {"beta2", c.beta2}, {"epsilon", c.epsilon}};
}

AdamConfig adam_from_json(const json& j) {
    AdamConfig c;
    c.alpha = j.at("alpha").get<double>();
    c.beta1 = j.at("beta1").get<double>();
    c.beta2 = j.at("beta2").get<double>();
    c.epsilon = j.at("epsilon").get<double>();
    return c;
}

void write_checkpoint(const std::string& path, const std::string& type, const json& hyper,
                      const TrainMeta& meta,
                      const std::vector<std::pair<std::string, Vector>>& arrays) {
    json header;
    header["type"] = type;
    header["hyper"] = hyper;
    header["meta"] = meta_to_json(meta);
    json dir = json::array();
    for (const auto& [name, values] : arrays) {
        dir.push_back(json{{"name", name}, {"count", values.size()}});
    }
    header["arrays"] = std::move(dir);
    const std::string header_text = header.dump();

    std::string out;
    out.append(kMagic, sizeof(kMagic));
    put_u32(out, kVersion);
    put_u32(out, 0);  // reserved
    put_u64(out, header_text.size());
    out += header_text;
    for (const auto& [name, values] : arrays) {
        put_u64(out, values.size());
        for (double v : values) put_f64(out, v);
    }
    atomic_write_file(path, out);
}

struct LoadedCheckpoint {
    json header;
    std::vector<Vector> arrays;
};

LoadedCheckpoint read_checkpoint(const std::string& path, const std::string& expected_type) {
    const std::string buf = read_file(path);
    Reader r{buf, 0, path};
    const std::string magic = r.bytes(sizeof(kMagic));
    if (std::memcmp(magic.data(), kMagic, sizeof(kMagic)) != 0) {
        throw std::runtime_error("checkpoint '" + path + "': bad magic");
    }
    const std::uint32_t version = r.u32();
    if (version != kVersion) {
        throw std::runtime_error("checkpoint '" + path + "': unsupported version " +
                                 std::to_string(version));
    }
    r.u32();  // reserved
    const std::uint64_t header_len = r.u64();
    LoadedCheckpoint loaded;
    try {
        loaded.header = json::parse(r.bytes(header_len));
    } catch (const json::parse_error& e) {
        throw std::runtime_error("checkpoint '" + path + "': bad header: " + e.what());
    }
    const std::string type = loaded.header.value("type", "");
    if (!expected_type.empty() && type != expected_type) {
        throw std::runtime_error("checkpoint '" + path + "': type '" + type + "', expected '" +
                                 expected_type + "'");
    }
    for (const json& entry : loaded.header.at("arrays")) {
        const auto count = entry.at("count").get<std::uint64_t>();
        const std::uint64_t stored = r.u64();
        if (stored != count) {
            throw std::runtime_error("checkpoint '" + path + "': array count mismatch");
        }
        Vector values(count);
        for (std::uint64_t i = 0; i < count; ++i) values[i] = r.f64();
        loaded.arrays.push_back(std::move(values));
    }
    if (r.pos != buf.size()) {
        throw std::runtime_error("checkpoint '" + path + "': trailing bytes");
    }
    return loaded;
}

}  // namespace

void save_dgm_checkpoint(const std::string& path, const dgm::DgmModel& model,
                         const TrainMeta& meta) {
    const dgm::DgmHyper& h = model.hyper;
    json hyper;
    hyper["n_x"] = h.n_x;
    hyper["n_z"] = h.n_z;
    hyper["n_h"] = h.n_h;
    hyper["hidden_layers"] = h.hidden_layers;
    hyper["drop_prob"] = h.drop_prob;
    hyper["adam"] = adam_to_json(h.adam);
    hyper["max_iters"] = h.max_iters;
    hyper["eval_every"] = h.eval_every;
    hyper["batch_frames"] = h.batch_frames;
    hyper["plateau_iters"] = h.plateau_iters;
    hyper["prior_patient"] = h.prior_patient;
    hyper["weight_init_std"] = h.weight_init_std;
    hyper["variance_floor"] = h.variance_floor;

    Vector enc(model.encoder.param_count());
    model.encoder.get_params(enc);
    Vector dec(model.decoder.param_count());
    model.decoder.get_params(dec);
    write_checkpoint(path, "dgm", hyper, meta,
                     {{"encoder_params", std::move(enc)}, {"decoder_params", std::move(dec)}});
}

dgm::DgmModel load_dgm_checkpoint(const std::string& path, TrainMeta* meta) {
    const LoadedCheckpoint loaded = read_checkpoint(path, "dgm");
    const json& hj = loaded.header.at("hyper");
    dgm::DgmHyper h;
    h.n_x = hj.at("n_x").get<std::size_t>();
    h.n_z = hj.at("n_z").get<std::size_t>();
    h.n_h = hj.at("n_h").get<std::size_t>();
    h.hidden_layers = hj.at("hidden_layers").get<std::size_t>();
    h.drop_prob = hj.at("drop_prob").get<double>();
    h.adam = adam_from_json(hj.at("adam"));
    h.max_iters = hj.at("max_iters").get<std::size_t>();
    h.eval_every = hj.at("eval_every").get<std::size_t>();
    h.batch_frames = hj.at("batch_frames").get<std::size_t>();
    h.plateau_iters = hj.at("plateau_iters").get<std::size_t>();
    h.prior_patient = hj.at("prior_patient").get<double>();
    h.weight_init_std = hj.at("weight_init_std").get<double>();
    h.variance_floor = hj.at("variance_floor").get<double>();

    RngStream scratch_rng(0);
    dgm::DgmModel model = dgm::DgmModel::init(h, scratch_rng);
    if (loaded.arrays.size() != 2 || loaded.arrays[0].size() != model.encoder.param_count() ||
        loaded.arrays[1].size() != model.decoder.param_count()) {
        throw std::runtime_error("checkpoint '" + path + "': parameter arrays do not match hyper");
    }
    model.encoder.set_params(loaded.arrays[0]);
    model.decoder.set_params(loaded.arrays[1]);
    if (meta) *meta = meta_from_json(loaded.header.at("meta"));
    return model;
}

void save_gmm_checkpoint(const std::string& path, const baselines::GmmPair& pair,
                         const TrainMeta& meta) {
    json hyper;
    hyper["components"] = pair.options.components;
    hyper["max_em_iters"] = pair.options.max_em_iters;
    hyper["rel_tol"] = pair.options.rel_tol;
    hyper["reg_scale"] = pair.options.reg_scale;
    hyper["dim"] = pair.control.dim();

    std::vector<std::pair<std::string, Vector>> arrays;
    const baselines::GmmModel* models[2] = {&pair.control, &pair.patient};
    for (int cls = 0; cls < 2; ++cls) {
        const baselines::GmmModel& m = *models[cls];
        const std::string suffix = cls == 0 ? "_control" : "_patient";
        arrays.emplace_back("weights" + suffix, m.weights());
        Vector means;
        for (const Vector& mu : m.means()) means.insert(means.end(), mu.begin(), mu.end());
        arrays.emplace_back("means" + suffix, std::move(means));
        Vector covs;
        for (const Matrix& c : m.covariances()) {
            covs.insert(covs.end(), c.data().begin(), c.data().end());
        }
        arrays.emplace_back("covariances" + suffix, std::move(covs));
    }
    write_checkpoint(path, "gmm_pair", hyper, meta, arrays);
}

baselines::GmmPair load_gmm_checkpoint(const std::string& path, TrainMeta* meta) {
    const LoadedCheckpoint loaded = read_checkpoint(path, "gmm_pair");
    const json& hj = loaded.header.at("hyper");
    baselines::GmmFitOptions options;
    options.components = hj.at("components").get<std::size_t>();
    options.max_em_iters = hj.at("max_em_iters").get<std::size_t>();
    options.rel_tol = hj.at("rel_tol").get<double>();
    options.reg_scale = hj.at("reg_scale").get<double>();
    const auto d = hj.at("dim").get<std::size_t>();
    if (loaded.arrays.size() != 6) {
        throw std::runtime_error("checkpoint '" + path + "': expected 6 arrays");
    }

    auto build = [&](std::size_t base) {
        const Vector& w = loaded.arrays[base];
        // Component count per class comes from the stored weights; the two
        // classes need not agree (options.components is a fit setting, not a
        // model property).
        const std::size_t k = w.size();
        const Vector& means_flat = loaded.arrays[base + 1];
        const Vector& covs_flat = loaded.arrays[base + 2];
        if (k == 0 || means_flat.size() != k * d || covs_flat.size() != k * d * d) {
            throw std::runtime_error("checkpoint '" + path + "': array sizes do not match hyper");
        }
        std::vector<Vector> means(k);
        std::vector<Matrix> covs;
        for (std::size_t j = 0; j < k; ++j) {
            means[j].assign(means_flat.begin() + static_cast<std::ptrdiff_t>(j * d),
                            means_flat.begin() + static_cast<std::ptrdiff_t>((j + 1) * d));
            Vector block(covs_flat.begin() + static_cast<std::ptrdiff_t>(j * d * d),
                         covs_flat.begin() + static_cast<std::ptrdiff_t>((j + 1) * d * d));
            covs.emplace_back(d, d, std::move(block));
        }
        return baselines::GmmModel(w, std::move(means), std::move(covs));
    };

    baselines::GmmPair pair{build(0), build(3), options};
    if (meta) *meta = meta_from_json(loaded.header.at("meta"));
    return pair;
}

void save_mlp_checkpoint(const std::string& path, const baselines::MlpClassifier& clf,
                         const TrainMeta& meta) {
    const baselines::MlpHyper& h = clf.hyper;
    json hyper;
    hyper["n_x"] = h.n_x;
    hyper["n_h"] = h.n_h;
    hyper["hidden_layers"] = h.hidden_layers;
    hyper["drop_prob"] = h.drop_prob;
    hyper["adam"] = adam_to_json(h.adam);
    hyper["max_iters"] = h.max_iters;
    hyper["eval_every"] = h.eval_every;
    hyper["batch_frames"] = h.batch_frames;
    hyper["plateau_iters"] = h.plateau_iters;
    hyper["weight_init_std"] = h.weight_init_std;

    Vector params(clf.net.param_count());
    clf.net.get_params(params);
    write_checkpoint(path, "mlp", hyper, meta, {{"params", std::move(params)}});
}

baselines::MlpClassifier load_mlp_checkpoint(const std::string& path, TrainMeta* meta) {
    const LoadedCheckpoint loaded = read_checkpoint(path, "mlp");
    const json& hj = loaded.header.at("hyper");
    baselines::MlpHyper h;
    h.n_x = hj.at("n_x").get<std::size_t>();
    h.n_h = hj.at("n_h").get<std::size_t>();
    h.hidden_layers = hj.at("hidden_layers").get<std::size_t>();
    h.drop_prob = hj.at("drop_prob").get<double>();
    h.adam = adam_from_json(hj.at("adam"));
    h.max_iters = hj.at("max_iters").get<std::size_t>();
    h.eval_every = hj.at("eval_every").get<std::size_t>();
    h.batch_frames = hj.at("batch_frames").get<std::size_t>();
    h.plateau_iters = hj.at("plateau_iters").get<std::size_t>();
    h.weight_init_std = hj.at("weight_init_std").get<double>();

    RngStream scratch_rng(0);
    baselines::MlpClassifier clf = baselines::MlpClassifier::init(h, scratch_rng);
    if (loaded.arrays.size() != 1 || loaded.arrays[0].size() != clf.net.param_count()) {
        throw std::runtime_error("checkpoint '" + path + "': parameter array does not match hyper");
    }
    clf.net.set_params(loaded.arrays[0]);
    if (meta) *meta = meta_from_json(loaded.header.at("meta"));
    return clf;
}

std::string checkpoint_type(const std::string& path) {
    const LoadedCheckpoint loaded = read_checkpoint(path, "");
    return loaded.header.value("type", "");
}

}  // namespace gendx
