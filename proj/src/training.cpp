#include "sdseg/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

namespace sdseg {

std::vector<FoldSplit> make_folds(std::vector<std::string> video_ids, int n_folds,
                                  std::uint64_t seed) {
    if (video_ids.empty()) throw DataError("make_folds: no videos");
    if (n_folds < 1 || video_ids.size() % static_cast<std::size_t>(n_folds) != 0)
        throw ConfigError("make_folds: " + std::to_string(video_ids.size()) +
                          " videos are not divisible into " + std::to_string(n_folds) +
                          " folds; supply an explicit split table");
    std::sort(video_ids.begin(), video_ids.end());
    std::mt19937_64 rng(seed);
    std::shuffle(video_ids.begin(), video_ids.end(), rng);
    const std::size_t per_fold = video_ids.size() / static_cast<std::size_t>(n_folds);
    std::vector<FoldSplit> folds;
    for (int f = 0; f < n_folds; ++f) {
        FoldSplit split;
        split.fold_id = f;
        for (std::size_t i = 0; i < video_ids.size(); ++i) {
            if (i / per_fold == static_cast<std::size_t>(f))
                split.test_videos.push_back(video_ids[i]);
            else
                split.train_videos.push_back(video_ids[i]);
        }
        std::sort(split.test_videos.begin(), split.test_videos.end());
        std::sort(split.train_videos.begin(), split.train_videos.end());
        folds.push_back(std::move(split));
    }
    return folds;
}

std::vector<FoldSplit> make_folds(const std::vector<std::string>& video_ids,
                                  const std::vector<FoldSplit>& table) {
    std::vector<std::string> all(video_ids);
    std::sort(all.begin(), all.end());
    std::vector<std::string> covered;
    for (const auto& fold : table) {
        for (const auto& v : fold.test_videos) covered.push_back(v);
        std::vector<std::string> uni(fold.train_videos);
        uni.insert(uni.end(), fold.test_videos.begin(), fold.test_videos.end());
        std::sort(uni.begin(), uni.end());
        if (uni != all)
            throw ConfigError("fold " + std::to_string(fold.fold_id) +
                              " does not cover the video set exactly");
    }
    std::sort(covered.begin(), covered.end());
    if (covered != all) throw ConfigError("fold table test sets do not partition the videos");
    return table;
}

std::vector<int> select_supervised_frames(const VideoSequence& video, Supervision supervision) {
    std::vector<int> out;
    switch (supervision) {
        case Supervision::none: break;
        case Supervision::half:
            for (int t = 0; t < video.length(); t += 2) out.push_back(t);
            break;
        case Supervision::full:
            out.resize(static_cast<std::size_t>(video.length()));
            std::iota(out.begin(), out.end(), 0);
            break;
    }
    return out;
}

std::vector<FramePairRef> make_pairs(const std::vector<VideoSequence>& videos, PairingMode mode,
                                     int stride, std::uint64_t seed) {
    if (videos.empty()) throw DataError("make_pairs: no videos");
    if (stride < 1) throw ConfigError("make_pairs: stride must be >= 1");
    std::size_t slots = 0;
    for (const auto& v : videos) {
        if (mode == PairingMode::adjacent && stride >= v.length())
            throw ConfigError("make_pairs: stride " + std::to_string(stride) +
                              " >= length of video " + v.video_id);
        slots += static_cast<std::size_t>(std::max(0, v.length() - stride));
    }

    std::vector<FramePairRef> pairs;
    pairs.reserve(slots);
    if (mode == PairingMode::adjacent) {
        for (int vi = 0; vi < static_cast<int>(videos.size()); ++vi)
            for (int t = 0; t + stride < videos[static_cast<std::size_t>(vi)].length(); ++t)
                pairs.push_back({vi, t, vi, t + stride, PairingMode::adjacent});
        return pairs;
    }

    // random mode: uniform unordered pairs of distinct frames, dataset-wide
    std::vector<std::pair<int, int>> flat;
    for (int vi = 0; vi < static_cast<int>(videos.size()); ++vi)
        for (int t = 0; t < videos[static_cast<std::size_t>(vi)].length(); ++t)
            flat.emplace_back(vi, t);
    if (flat.size() < 2) throw DataError("make_pairs: need at least two frames");
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, flat.size() - 1);
    for (std::size_t i = 0; i < slots; ++i) {
        std::size_t a = pick(rng), b = pick(rng);
        while (b == a) b = pick(rng);
        pairs.push_back({flat[a].first, flat[a].second, flat[b].first, flat[b].second,
                         PairingMode::random_pairs});
    }
    return pairs;
}

void TrainConfig::validate() const {
    if (pair_stride < 1) throw ConfigError("TrainConfig: pair_stride must be >= 1");
    if (batch_pairs < 1) throw ConfigError("TrainConfig: batch_pairs must be >= 1");
    if (epochs < 1) throw ConfigError("TrainConfig: epochs must be >= 1");
    if (!(learning_rate > 0)) throw ConfigError("TrainConfig: learning_rate must be positive");
    if (num_workers < 1) throw ConfigError("TrainConfig: num_workers must be >= 1");
    if (!(margins.m_fg >= 0) || !(margins.m_bg >= 0))
        throw ConfigError("TrainConfig: margins must be non-negative");
}

namespace {

void process_pair(const UNet& net, const PairBatchItem& item, const DiffusionMargins& margins,
                  LossTerms terms, TrainWorkspaces::Worker& wk, PairLossBreakdown& out) {
    net.forward(*item.frame_a, wk.ws_a);
    net.forward(*item.frame_b, wk.ws_b);
    const auto pa = wk.ws_a.prediction();
    const auto pb = wk.ws_b.prediction();
    wk.pred_a.assign(pa.begin(), pa.end());
    wk.pred_b.assign(pb.begin(), pb.end());
    wk.grad_a.resize(wk.pred_a.size());
    wk.grad_b.resize(wk.pred_b.size());
    out = full_loss_grad(wk.pred_a, wk.pred_b, *item.anchors_a, *item.anchors_b, *item.feat_a,
                         *item.feat_b, margins, terms, wk.grad_a, wk.grad_b);
    wk.fgrad.assign(wk.grad_a.begin(), wk.grad_a.end());
    net.backward(wk.fgrad, wk.ws_a);
    wk.fgrad.assign(wk.grad_b.begin(), wk.grad_b.end());
    net.backward(wk.fgrad, wk.ws_b);
}

} // namespace

PairLossBreakdown train_step(UNet& net, AdamOptimizer& opt, std::span<const PairBatchItem> batch,
                             const DiffusionMargins& margins, LossTerms terms,
                             TrainWorkspaces& scratch, int num_workers) {
    if (batch.empty()) throw DataError("train_step: empty batch");
    const int workers = std::clamp<int>(num_workers, 1, static_cast<int>(batch.size()));
    scratch.workers.resize(static_cast<std::size_t>(workers));
    std::vector<PairLossBreakdown> results(batch.size());

    auto run_slice = [&](int w) {
        auto& wk = scratch.workers[static_cast<std::size_t>(w)];
        wk.ws_a.zero_param_grad();
        wk.ws_b.zero_param_grad();
        for (std::size_t i = static_cast<std::size_t>(w); i < batch.size();
             i += static_cast<std::size_t>(workers))
            process_pair(net, batch[i], margins, terms, wk, results[i]);
    };
    if (workers == 1) {
        run_slice(0);
    } else {
        std::vector<std::thread> threads;
        for (int w = 0; w < workers; ++w) threads.emplace_back(run_slice, w);
        for (auto& t : threads) t.join();
    }

    PairLossBreakdown mean;
    for (std::size_t i = 0; i < results.size(); ++i) {
        const auto& r = results[i];
        if (!std::isfinite(r.total)) {
            const auto& item = batch[i];
            std::ostringstream os;
            os << "non-finite loss on pair (" << item.frame_a->video_id << "/t" << item.frame_a->t
               << ", " << item.frame_b->video_id << "/t" << item.frame_b->t << "): anchor_a="
               << r.anchor_a << " anchor_b=" << r.anchor_b << " dif_fg=" << r.dif_fg
               << " dif_bg=" << r.dif_bg;
            throw NumericalError(os.str());
        }
        mean.anchor_a += r.anchor_a;
        mean.anchor_b += r.anchor_b;
        mean.dif_fg += r.dif_fg;
        mean.dif_bg += r.dif_bg;
        mean.total += r.total;
        mean.degenerate_region = mean.degenerate_region || r.degenerate_region;
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    mean.anchor_a *= inv;
    mean.anchor_b *= inv;
    mean.dif_fg *= inv;
    mean.dif_bg *= inv;
    mean.total *= inv;

    // batch-mean gradient, worker buffers reduced in fixed order
    const std::size_t np = net.parameter_count();
    std::vector<float> grad(np, 0.f);
    for (auto& wk : scratch.workers) {
        const auto ga = wk.ws_a.param_grad();
        const auto gb = wk.ws_b.param_grad();
        if (ga.size() != np) continue; // worker had no pairs this step
        for (std::size_t i = 0; i < np; ++i) grad[i] += ga[i] + gb[i];
    }
    const float scale = static_cast<float>(inv);
    for (auto& g : grad) g *= scale;
    opt.step(net.parameters(), grad);
    return mean;
}

std::string to_jsonl(const TrainLogRecord& rec) {
    nlohmann::json j = {{"epoch", rec.epoch},     {"step", rec.step},
                        {"L_anc_a", rec.l_anc_a}, {"L_anc_b", rec.l_anc_b},
                        {"L_dif_fg", rec.l_dif_fg}, {"L_dif_bg", rec.l_dif_bg},
                        {"L_full", rec.l_full}};
    return j.dump();
}

TrainResult run_training(const TrainConfig& config, const TrainData& data,
                         std::ostream* log_stream,
                         const std::function<void(int, const PairLossBreakdown&)>& on_epoch) {
    config.validate();
    if (!data.videos || !data.anchors || !data.features)
        throw DataError("run_training: missing prepared data");
    const auto& videos = *data.videos;
    if (videos.empty()) throw DataError("run_training: no videos");

    auto pairs = make_pairs(videos, config.pairing, config.pair_stride, config.seed);
    UNet net(config.net, data.working, config.seed);
    AdamOptimizer opt(net.parameter_count(), config.learning_rate);
    TrainWorkspaces scratch;
    std::mt19937_64 shuffle_rng(config.seed ^ 0x5851f42d4c957f2dull);

    TrainResult result{std::move(net), {}};
    std::vector<std::size_t> order(pairs.size());
    std::iota(order.begin(), order.end(), 0);

    // per-frame feature maps are materialized at prediction resolution per
    // batch; native grids stay cached upstream
    std::vector<FeatureMap> feat_cache;
    auto materialize = [&](int vi, int fi) -> FeatureMap {
        const auto& grid = (*data.features)[static_cast<std::size_t>(vi)][static_cast<std::size_t>(fi)];
        return FeatureExtractor::upsample(grid, data.working);
    };

    int step_counter = 0;
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        std::size_t use = order.size();
        if (config.pairs_per_epoch > 0)
            use = std::min(use, static_cast<std::size_t>(config.pairs_per_epoch));

        PairLossBreakdown epoch_mean;
        int epoch_steps = 0;
        for (std::size_t start = 0; start < use; start += static_cast<std::size_t>(config.batch_pairs)) {
            const std::size_t stop = std::min(use, start + static_cast<std::size_t>(config.batch_pairs));
            std::vector<PairBatchItem> batch;
            feat_cache.clear();
            feat_cache.reserve(2 * (stop - start));
            for (std::size_t k = start; k < stop; ++k) {
                const auto& pr = pairs[order[k]];
                feat_cache.push_back(materialize(pr.video_a, pr.frame_a));
                feat_cache.push_back(materialize(pr.video_b, pr.frame_b));
                PairBatchItem item;
                item.frame_a = &videos[static_cast<std::size_t>(pr.video_a)].frames[static_cast<std::size_t>(pr.frame_a)];
                item.anchors_a = &(*data.anchors)[static_cast<std::size_t>(pr.video_a)][static_cast<std::size_t>(pr.frame_a)];
                item.feat_a = &feat_cache[feat_cache.size() - 2];
                item.frame_b = &videos[static_cast<std::size_t>(pr.video_b)].frames[static_cast<std::size_t>(pr.frame_b)];
                item.anchors_b = &(*data.anchors)[static_cast<std::size_t>(pr.video_b)][static_cast<std::size_t>(pr.frame_b)];
                item.feat_b = &feat_cache.back();
                batch.push_back(item);
            }
            const auto mean = train_step(result.net, opt, batch, config.margins, config.terms,
                                         scratch, config.num_workers);
            ++step_counter;
            ++epoch_steps;
            TrainLogRecord rec{epoch, step_counter, mean.anchor_a, mean.anchor_b,
                               mean.dif_fg, mean.dif_bg, mean.total};
            if (log_stream) (*log_stream) << to_jsonl(rec) << "\n";
            result.log.push_back(rec);
            epoch_mean.anchor_a += mean.anchor_a;
            epoch_mean.anchor_b += mean.anchor_b;
            epoch_mean.dif_fg += mean.dif_fg;
            epoch_mean.dif_bg += mean.dif_bg;
            epoch_mean.total += mean.total;
        }
        if (epoch_steps > 0) {
            const double inv = 1.0 / epoch_steps;
            epoch_mean.anchor_a *= inv;
            epoch_mean.anchor_b *= inv;
            epoch_mean.dif_fg *= inv;
            epoch_mean.dif_bg *= inv;
            epoch_mean.total *= inv;
        }
        if (on_epoch) on_epoch(epoch, epoch_mean);
    }
    return result;
}

} // namespace sdseg
