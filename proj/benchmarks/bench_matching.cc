#include <benchmark/benchmark.h>

#include "topicmatch/model.h"
#include "topicmatch/synth_data.h"

using namespace topicmatch;

namespace {

Model small_model(Variant v) {
  ModelConfig cfg;
  cfg.widths = BackboneWidths{32, 48, 64};
  cfg.matcher.num_topics = 16;
  cfg.matcher.k_covis = 8;
  cfg.matcher.variant = v;
  return init_model(cfg);
}

// End-to-end matching of one synthetic pair at side x side pixels.
void BM_Match(benchmark::State& state, Variant v) {
  SceneParams scene;
  scene.width = scene.height = static_cast<int>(state.range(0));
  const ScenePair pair = generate_scene_pair(11, scene);
  const Model model = small_model(v);
  for (auto _ : state) {
    const MatchOutput out = run_matching(model, pair.image_a, pair.image_b);
    benchmark::DoNotOptimize(out.fine.matches.size());
  }
}
BENCHMARK_CAPTURE(BM_Match, fast, Variant::kFast)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_Match, plus, Variant::kPlus)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_Backbone(benchmark::State& state) {
  SceneParams scene;
  scene.width = scene.height = static_cast<int>(state.range(0));
  const ScenePair pair = generate_scene_pair(12, scene);
  const Model model = small_model(Variant::kFast);
  for (auto _ : state) {
    benchmark::DoNotOptimize(extract_pyramid(standardize_image(pair.image_a), model.backbone).coarse.value().data());
  }
}
BENCHMARK(BM_Backbone)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

}  // namespace
