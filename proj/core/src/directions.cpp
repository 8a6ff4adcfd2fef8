#include "saedit/directions.hpp"

#include <algorithm>
#include <cmath>

namespace saedit::directions {

std::string to_string(DirectionMethod method) {
    return method == DirectionMethod::SinglePair ? "single-pair" : "svd-aggregate";
}

void EditDirection::validate() const {
    d_edit.validate();
    for (std::size_t i = 0; i < index_set.size(); ++i) {
        if (index_set[i] >= d_edit.dim) throw ShapeError("edit direction: index set entry out of range");
        if (i > 0 && index_set[i] <= index_set[i - 1]) throw ShapeError("edit direction: index set not sorted");
    }
    if (method == DirectionMethod::SinglePair) {
        for (const auto& e : d_edit.entries) {
            if (!std::binary_search(index_set.begin(), index_set.end(), e.index)) {
                throw ShapeError("edit direction: support entry " + std::to_string(e.index) + " outside index set");
            }
        }
    }
}

PromptEncoding pool_prompt(std::vector<SparseCode> codes, std::string prompt_id) {
    if (codes.empty()) throw DataError("pool_prompt: prompt has no tokens");
    const std::size_t dim = codes.front().dim;
    PromptEncoding out;
    out.prompt_id = std::move(prompt_id);
    out.pooled.assign(dim, 0.0);
    for (const auto& c : codes) {
        if (c.dim != dim) throw ShapeError("pool_prompt: token codes disagree on dimension");
        for (const auto& e : c.entries) {
            if (e.index >= dim) throw ShapeError("pool_prompt: latent index out of range");
            out.pooled[e.index] = std::max(out.pooled[e.index], e.value);
        }
    }
    out.token_codes = std::move(codes);
    return out;
}

RatioResult entry_ratio(const PromptEncoding& src, const PromptEncoding& tgt, double epsilon) {
    if (src.pooled.size() != tgt.pooled.size()) throw ShapeError("entry_ratio: prompt encodings differ in width");
    if (!(epsilon > 0.0)) throw ConfigError("entry_ratio: epsilon must be > 0");
    const std::size_t n = tgt.pooled.size();
    RatioResult r;
    r.epsilon = epsilon;
    r.ratio.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        r.ratio[i] = tgt.pooled[i] / (src.pooled[i] + epsilon);
        r.self_ratio_baseline = std::max(r.self_ratio_baseline, tgt.pooled[i] / (tgt.pooled[i] + epsilon));
    }
    r.max_ratio = n == 0 ? 0.0 : *std::max_element(r.ratio.begin(), r.ratio.end());
    if (!std::isfinite(r.max_ratio)) throw NumericError("entry_ratio: non-finite ratio");
    if (!(r.max_ratio > 0.0)) {
        throw DegenerateError("entry_ratio: target prompt has no active latents (max ratio is 0)");
    }
    r.r_norm.resize(n);
    for (std::size_t i = 0; i < n; ++i) r.r_norm[i] = r.ratio[i] / r.max_ratio;
    return r;
}

std::vector<std::uint32_t> select_indices(const RatioResult& r, double rho) {
    if (!(rho >= 0.0 && rho < 1.0)) throw ConfigError("select_indices: rho must lie in [0, 1)");
    if (!(r.max_ratio > 0.0)) throw DegenerateError("select_indices: degenerate ratio (max ratio is 0)");
    std::vector<std::uint32_t> m;
    for (std::size_t i = 0; i < r.r_norm.size(); ++i)
        if (r.r_norm[i] > rho) m.push_back(static_cast<std::uint32_t>(i));
    return m;
}

EditDirection build_direction(const PromptEncoding& tgt, std::span<const std::uint32_t> m, double rho) {
    if (m.empty()) throw DegenerateError("build_direction: empty index set");
    EditDirection dir;
    dir.rho = rho;
    dir.method = DirectionMethod::SinglePair;
    dir.d_edit.dim = tgt.pooled.size();
    dir.index_set.assign(m.begin(), m.end());
    std::sort(dir.index_set.begin(), dir.index_set.end());
    dir.index_set.erase(std::unique(dir.index_set.begin(), dir.index_set.end()), dir.index_set.end());
    for (auto i : dir.index_set) {
        if (i >= tgt.pooled.size()) throw ShapeError("build_direction: index " + std::to_string(i) + " out of range");
        if (tgt.pooled[i] != 0.0) dir.d_edit.entries.push_back({i, tgt.pooled[i]});
    }
    if (dir.d_edit.entries.empty()) {
        throw DegenerateError("build_direction: every selected target entry is zero");
    }
    if (!tgt.prompt_id.empty()) dir.sources.push_back(tgt.prompt_id);
    return dir;
}

EditDirection extract_direction(const std::vector<SparseCode>& src_codes, const std::vector<SparseCode>& tgt_codes,
                                const ExtractOptions& opts, const std::string& pair_id) {
    const PromptEncoding src = pool_prompt(src_codes);
    const PromptEncoding tgt = pool_prompt(tgt_codes);
    const RatioResult r = entry_ratio(src, tgt, opts.epsilon);
    std::vector<std::uint32_t> m = select_indices(r, opts.rho);

    for (auto i : opts.overrides.include) {
        if (i >= tgt.pooled.size()) throw UsageError("include index " + std::to_string(i) + " out of range");
        m.push_back(i);
    }
    std::sort(m.begin(), m.end());
    m.erase(std::unique(m.begin(), m.end()), m.end());
    std::erase_if(m, [&](std::uint32_t i) {
        return std::find(opts.overrides.exclude.begin(), opts.overrides.exclude.end(), i) !=
               opts.overrides.exclude.end();
    });

    EditDirection dir = build_direction(tgt, m, opts.rho);
    dir.epsilon = opts.epsilon;
    dir.max_ratio = r.max_ratio;
    dir.self_ratio_baseline = r.self_ratio_baseline;
    dir.sources.clear();
    if (!pair_id.empty()) dir.sources.push_back(pair_id);
    return dir;
}

EditDirection aggregate_directions(std::span<const EditDirection> dirs, std::uint64_t seed) {
    if (dirs.size() < 2) throw ConfigError("aggregate_directions: need at least two directions");
    const std::size_t dim = dirs.front().dim();
    std::vector<SparseVector> rows;
    rows.reserve(dirs.size());
    for (const auto& d : dirs) {
        if (d.dim() != dim) throw ShapeError("aggregate_directions: directions disagree on dimension");
        rows.push_back(d.d_edit);
    }

    linalg::PowerIterationOptions opts;
    opts.seed = seed;
    const linalg::SingularPair top = linalg::top_singular_vector(rows, dim, opts);

    EditDirection out;
    out.method = DirectionMethod::SvdAggregate;
    out.rho = dirs.front().rho;
    out.epsilon = dirs.front().epsilon;
    out.d_edit = SparseVector::from_dense(top.vector, kSupportDust);
    double peak = 0.0;
    for (const auto& e : out.d_edit.entries) peak = std::max(peak, std::abs(e.value));
    for (const auto& e : out.d_edit.entries)
        if (std::abs(e.value) > out.rho * peak) out.index_set.push_back(e.index);
    out.max_ratio = dirs.front().max_ratio;
    out.self_ratio_baseline = dirs.front().self_ratio_baseline;
    for (const auto& d : dirs) {
        out.sources.insert(out.sources.end(), d.sources.begin(), d.sources.end());
        // Keep the weakest pair's statistic so a degenerate contributor stays visible.
        if (d.max_ratio - d.self_ratio_baseline < out.max_ratio - out.self_ratio_baseline) {
            out.max_ratio = d.max_ratio;
            out.self_ratio_baseline = d.self_ratio_baseline;
        }
    }
    return out;
}

std::vector<SparseCode> encode_sequence(const sae::SaeModel& model, const EmbeddingSequence& seq) {
    seq.validate();
    std::vector<SparseCode> codes;
    for (std::size_t i : seq.content_rows()) codes.push_back(sae::encode(model, seq.embeddings.row(i)));
    if (codes.empty()) throw DataError("encode_sequence: sequence has only padding tokens");
    return codes;
}

}  // namespace saedit::directions
