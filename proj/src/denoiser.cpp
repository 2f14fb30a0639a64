#include "rdm/denoiser.hpp"

#include <cmath>

#include "json.hpp"
#include "rdm/io.hpp"
#include "rdm/serialize.hpp"

namespace rdm {

namespace {

using nlohmann::json;

std::string blk(int i, const char* suffix) { return "blk" + std::to_string(i) + "." + suffix; }

Tensor scaled_gaussian(int rows, int cols, Rng& rng) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(rows));
    return Tensor::gaussian({rows, cols}, rng, scale);
}

}  // namespace

void DenoiserConfig::validate() const {
    require(latent_dim >= 1 && hidden >= 1 && blocks >= 1 && heads >= 1 && cond_dim >= 1 &&
                time_dim >= 2,
            "DenoiserConfig: dimensions must be positive");
    require(hidden % heads == 0, "DenoiserConfig: hidden must be divisible by heads");
    require(time_dim % 2 == 0, "DenoiserConfig: time_dim must be even");
}

std::size_t DenoiserConfig::param_count() const {
    const std::size_t H = static_cast<std::size_t>(hidden);
    const std::size_t L = static_cast<std::size_t>(latent_dim);
    const std::size_t D = static_cast<std::size_t>(cond_dim);
    const std::size_t Td = static_cast<std::size_t>(time_dim);
    std::size_t n = L * H + H;   // in
    n += Td * H + H;             // time projection
    const std::size_t per_block = 2 * H                // norm1
                                  + H * H + H          // mlp.w1/b1
                                  + H * H + H          // mlp.w2/b2
                                  + 2 * H              // norm2
                                  + H * H + H          // attn.wq/bq
                                  + D * H + H          // attn.wk/bk
                                  + D * H + H          // attn.wv/bv
                                  + H * H + H;         // attn.wo/bo
    n += static_cast<std::size_t>(blocks) * per_block;
    n += 2 * H;                  // out.norm
    n += H * L + L;              // out projection (zero-initialized)
    return n;
}

ParamStore init_params(const DenoiserConfig& config) {
    config.validate();
    Rng rng(mix_seed(config.seed, 0xD40153ULL));
    const int H = config.hidden;

    ParamStore p;
    p.insert("in.w", scaled_gaussian(config.latent_dim, H, rng));
    p.insert("in.b", Tensor::zeros({H}));
    p.insert("time.w", scaled_gaussian(config.time_dim, H, rng));
    p.insert("time.b", Tensor::zeros({H}));
    for (int i = 0; i < config.blocks; ++i) {
        p.insert(blk(i, "norm1.g"), Tensor::full({H}, 1.0));
        p.insert(blk(i, "norm1.b"), Tensor::zeros({H}));
        p.insert(blk(i, "mlp.w1"), scaled_gaussian(H, H, rng));
        p.insert(blk(i, "mlp.b1"), Tensor::zeros({H}));
        p.insert(blk(i, "mlp.w2"), scaled_gaussian(H, H, rng));
        p.insert(blk(i, "mlp.b2"), Tensor::zeros({H}));
        p.insert(blk(i, "norm2.g"), Tensor::full({H}, 1.0));
        p.insert(blk(i, "norm2.b"), Tensor::zeros({H}));
        p.insert(blk(i, "attn.wq"), scaled_gaussian(H, H, rng));
        p.insert(blk(i, "attn.bq"), Tensor::zeros({H}));
        p.insert(blk(i, "attn.wk"), scaled_gaussian(config.cond_dim, H, rng));
        p.insert(blk(i, "attn.bk"), Tensor::zeros({H}));
        p.insert(blk(i, "attn.wv"), scaled_gaussian(config.cond_dim, H, rng));
        p.insert(blk(i, "attn.bv"), Tensor::zeros({H}));
        p.insert(blk(i, "attn.wo"), scaled_gaussian(H, H, rng));
        p.insert(blk(i, "attn.bo"), Tensor::zeros({H}));
    }
    p.insert("out.norm.g", Tensor::full({H}, 1.0));
    p.insert("out.norm.b", Tensor::zeros({H}));
    p.insert("out.w", Tensor::zeros({H, config.latent_dim}));
    p.insert("out.b", Tensor::zeros({config.latent_dim}));

    require(p.scalar_count() == config.param_count(), "init_params: parameter count drifted");
    return p;
}

Tensor time_embedding(int t, int dim) {
    require(t >= 0, "time_embedding: t >= 0 required");
    require(dim >= 2 && dim % 2 == 0, "time_embedding: even dim >= 2 required");
    const int half = dim / 2;
    Tensor out({dim});
    for (int j = 0; j < half; ++j) {
        const double freq = std::pow(10000.0, -static_cast<double>(j) / static_cast<double>(half));
        out[2 * j] = std::sin(t * freq);
        out[2 * j + 1] = std::cos(t * freq);
    }
    return out;
}

Var predict_noise(Tape& tape, const ParamVars& params, const DenoiserConfig& config,
                  const Tensor& z_t, int t, const ConditioningSet& cond) {
    config.validate();
    require(z_t.rank() == 1 && z_t.dim(0) == config.latent_dim,
            "predict_noise: z_t must be rank 1 of latent_dim");
    require(cond.count() >= 1, "predict_noise: empty conditioning set");
    require(cond.dim() == config.cond_dim, "predict_noise: conditioning dim mismatch");
    require(t >= 0, "predict_noise: t >= 0 required");

    const int head_dim = config.hidden / config.heads;
    Var ctx = tape.constant(cond.matrix());

    Var h = add(matmul(tape.constant(z_t), params.at("in.w")), params.at("in.b"));
    Var temb = tape.constant(time_embedding(t, config.time_dim));
    h = add(h, add(matmul(temb, params.at("time.w")), params.at("time.b")));

    for (int i = 0; i < config.blocks; ++i) {
        // residual MLP
        Var u = add(mul(layer_norm_rows(h), params.at(blk(i, "norm1.g"))), params.at(blk(i, "norm1.b")));
        u = silu(add(matmul(u, params.at(blk(i, "mlp.w1"))), params.at(blk(i, "mlp.b1"))));
        u = add(matmul(u, params.at(blk(i, "mlp.w2"))), params.at(blk(i, "mlp.b2")));
        h = add(h, u);

        // cross-attention: queries from the hidden state, keys/values from
        // the conditioning rows; no positions are injected, so the rows act
        // as a set
        Var a = add(mul(layer_norm_rows(h), params.at(blk(i, "norm2.g"))), params.at(blk(i, "norm2.b")));
        Var q = add(matmul(a, params.at(blk(i, "attn.wq"))), params.at(blk(i, "attn.bq")));
        Var keys = add_rows(matmul(ctx, params.at(blk(i, "attn.wk"))), params.at(blk(i, "attn.bk")));
        Var values = add_rows(matmul(ctx, params.at(blk(i, "attn.wv"))), params.at(blk(i, "attn.bv")));

        Var attended;
        for (int head = 0; head < config.heads; ++head) {
            Var qh = slice(q, head * head_dim, head_dim);
            Var kh = slice(keys, head * head_dim, head_dim);
            Var vh = slice(values, head * head_dim, head_dim);
            Var ah = attention(qh, kh, vh);
            attended = head == 0 ? ah : concat(attended, ah);
        }
        Var o = add(matmul(attended, params.at(blk(i, "attn.wo"))), params.at(blk(i, "attn.bo")));
        h = add(h, o);
    }

    Var out = add(mul(layer_norm_rows(h), params.at("out.norm.g")), params.at("out.norm.b"));
    return add(matmul(out, params.at("out.w")), params.at("out.b"));
}

Tensor predict_noise(const ParamStore& params, const DenoiserConfig& config, const Tensor& z_t,
                     int t, const ConditioningSet& cond) {
    Tape tape;
    ParamVars vars;
    for (const auto& [name, value] : params) vars.vars.emplace(name, tape.constant(value));
    Var out = predict_noise(tape, vars, config, z_t, t, cond);
    return tape.value(out);
}

std::string denoiser_config_json(const DenoiserConfig& config) {
    json j;
    j["latent_dim"] = config.latent_dim;
    j["hidden"] = config.hidden;
    j["blocks"] = config.blocks;
    j["heads"] = config.heads;
    j["cond_dim"] = config.cond_dim;
    j["time_dim"] = config.time_dim;
    j["seed"] = config.seed;
    return j.dump(2) + "\n";
}

DenoiserConfig denoiser_config_from_json(const std::string& text, const std::string& source) {
    try {
        const json j = json::parse(text);
        DenoiserConfig c;
        c.latent_dim = j.at("latent_dim").get<int>();
        c.hidden = j.at("hidden").get<int>();
        c.blocks = j.at("blocks").get<int>();
        c.heads = j.at("heads").get<int>();
        c.cond_dim = j.at("cond_dim").get<int>();
        c.time_dim = j.at("time_dim").get<int>();
        c.seed = j.at("seed").get<std::uint64_t>();
        c.validate();
        return c;
    } catch (const json::exception& e) {
        throw FormatError(source + ": " + e.what());
    }
}

void save_denoiser(const Denoiser& d, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    save_params(d.params, dir / "params.rdmw");
    atomic_write_text(dir / "config.json", denoiser_config_json(d.config));
}

Denoiser load_denoiser(const std::filesystem::path& dir) {
    Denoiser d;
    d.config = denoiser_config_from_json(read_text_file(dir / "config.json"),
                                         (dir / "config.json").string());
    d.params = load_params(dir / "params.rdmw");
    const ParamStore reference = init_params(d.config);
    if (!d.params.same_layout(reference))
        throw FormatError((dir / "params.rdmw").string() + ": weights do not match config layout");
    return d;
}

}  // namespace rdm
