/*
 * Copyright 2026 granary authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#include <gtest/gtest.h>

#include <random>

#include "granary/triggers.hpp"
#include "granary/workload.hpp"

using namespace granary;

namespace {

std::vector<Granule> granules(int n) {
    std::vector<Granule> out(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        out[static_cast<std::size_t>(i)].id = {0, 0, i};
    }
    return out;
}

void put(Granule& g, std::int64_t records, std::int64_t value = 1, Bytes per_record = 10) {
    for (std::int64_t i = 0; i < records; ++i) {
        g.unconsumed.raw_records += 1;
        g.unconsumed.raw_bytes += per_record;
        g.unconsumed.raw.add(value);
        g.stats.bytes += per_record;
        g.stats.kv_pairs += 1;
    }
}

TriggerSpec spec(TriggerKind k, std::int64_t x = 100) {
    TriggerSpec t;
    t.kind = k;
    t.x = x;
    return t;
}

}  // namespace

TEST(Evaluate, BatchWaitsForProducer) {
    auto gs = granules(1);
    put(gs[0], 1000);
    StageProgress p;
    EXPECT_FALSE(evaluate(spec(TriggerKind::default_batch), gs[0], p));
    p.producer_done = true;
    EXPECT_TRUE(evaluate(spec(TriggerKind::default_batch), gs[0], p));
}

TEST(Evaluate, StreamingThreshold) {
    auto gs = granules(1);
    StageProgress p;
    put(gs[0], 99);
    EXPECT_FALSE(evaluate(spec(TriggerKind::default_streaming), gs[0], p));
    put(gs[0], 1);
    EXPECT_TRUE(evaluate(spec(TriggerKind::default_streaming), gs[0], p));
}

TEST(Engine, BatchNeverFiresOnIngest) {
    auto gs = granules(4);
    TriggerEngine e(0, 0, spec(TriggerKind::default_batch), ComputeType::stateless, 4);
    put(gs[1], 500);
    const std::vector<int> touched{1};
    EXPECT_TRUE(e.on_ingest(gs, touched, 0.0).empty());
    const auto f = e.on_data_generated(gs, 1.0);
    EXPECT_EQ(f.ready.size(), 4u);
    EXPECT_TRUE(f.ready_all.has_value());
}

TEST(Engine, CustomCounterFiresStageWideOnce) {
    auto gs = granules(3);
    TriggerSpec t;
    t.kind = TriggerKind::custom_counter;
    t.counter_id = "distinct";
    t.threshold = 100;
    TriggerEngine e(0, 0, t, ComputeType::stateless, 3);
    const std::vector<int> all{0, 1, 2};
    put(gs[0], 5);
    put(gs[1], 5);
    put(gs[2], 5);
    gs[0].stats.custom_counters["distinct"] = 40;
    gs[1].stats.custom_counters["distinct"] = 30;
    EXPECT_TRUE(e.on_ingest(gs, all, 0.0).empty());
    gs[2].stats.custom_counters["distinct"] = 30;
    const auto fired = e.on_ingest(gs, all, 1.0);
    EXPECT_EQ(fired.size(), 3u);
    // the baseline moved: no refire until another 100 accumulate
    put(gs[0], 5);
    gs[0].stats.custom_counters["distinct"] = 90;
    EXPECT_TRUE(e.on_ingest(gs, all, 2.0).empty());
    gs[0].stats.custom_counters["distinct"] = 140;
    EXPECT_EQ(e.on_ingest(gs, all, 3.0).size(), 1u);
}

TEST(Engine, PipeliningResidualsFlushThenReadyAll) {
    auto gs = granules(3);
    TriggerEngine e(0, 0, spec(TriggerKind::pipelining, 100), ComputeType::stateful_ca, 3);
    for (auto& g : gs) {
        put(g, 50);
    }
    const std::vector<int> all{0, 1, 2};
    EXPECT_TRUE(e.on_ingest(gs, all, 0.0).empty());
    const auto f = e.on_data_generated(gs, 1.0);
    ASSERT_EQ(f.ready.size(), 3u);
    for (const auto& r : f.ready) {
        EXPECT_TRUE(r.final);
        EXPECT_EQ(r.records, 50);
    }
    EXPECT_TRUE(f.ready_all.has_value());
}

TEST(Engine, AlreadyFlushedStageOnlySendsReadyAll) {
    auto gs = granules(2);
    TriggerEngine e(0, 0, spec(TriggerKind::default_streaming, 10), ComputeType::stateless, 2);
    put(gs[0], 10);
    put(gs[1], 10);
    const std::vector<int> all{0, 1};
    EXPECT_EQ(e.on_ingest(gs, all, 0.0).size(), 2u);
    const auto f = e.on_data_generated(gs, 1.0);
    EXPECT_TRUE(f.ready.empty());
    EXPECT_TRUE(f.ready_all.has_value());
}

TEST(Engine, DuplicateDataGenerated) {
    auto gs = granules(1);
    TriggerEngine e(0, 0, spec(TriggerKind::default_batch), ComputeType::stateless, 1);
    (void)e.on_data_generated(gs, 0.0);
    try {
        (void)e.on_data_generated(gs, 1.0);
        FAIL();
    } catch (const Error& err) {
        EXPECT_EQ(err.code(), ErrorCode::duplicate_data_generated);
    }
}

TEST(Engine, WritebackLeavesOneAggregateRecord) {
    auto gs = granules(1);
    TriggerEngine e(0, 0, spec(TriggerKind::pipelining, 100), ComputeType::stateful_ca, 1);
    put(gs[0], 150);
    const std::vector<int> one{0};
    const auto fired = e.on_ingest(gs, one, 0.0);
    ASSERT_EQ(fired.size(), 1u);
    EXPECT_EQ(fired[0].records, 150);
    (void)e.pipeline_writeback(gs, 0, 16, fired[0].content, 1.0);
    EXPECT_EQ(gs[0].unconsumed.records(), 1);
}

TEST(Engine, WritebackNeedsCommutativeAssociativeConsumer) {
    auto gs = granules(1);
    TriggerEngine e(0, 0, spec(TriggerKind::pipelining, 1), ComputeType::stateless, 1);
    try {
        (void)e.pipeline_writeback(gs, 0, 8, Aggregate{}, 0.0);
        FAIL();
    } catch (const Error& err) {
        EXPECT_EQ(err.code(), ErrorCode::not_commutative_associative);
    }
}

TEST(Engine, PipelinedFoldEqualsSinglePass) {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 25; ++trial) {
        const int n = 1 + static_cast<int>(uniform_below(rng, 4));
        const auto x = 1 + static_cast<std::int64_t>(uniform_below(rng, 40));
        auto gs = granules(n);
        TriggerEngine e(0, 0, spec(TriggerKind::pipelining, x), ComputeType::stateful_ca,
                        static_cast<std::uint32_t>(n));
        Aggregate oracle;
        std::vector<Aggregate> results(static_cast<std::size_t>(n));
        std::vector<DataReady> pending;
        auto consume = [&](const DataReady& r) {
            if (r.final) {
                results[static_cast<std::size_t>(r.granule.index)].merge(r.content);
            } else {
                pending.push_back(r);
            }
        };
        const int records = 50 + static_cast<int>(uniform_below(rng, 400));
        for (int i = 0; i < records; ++i) {
            const int gi = static_cast<int>(uniform_below(rng, static_cast<std::uint64_t>(n)));
            const auto v = static_cast<std::int64_t>(uniform_below(rng, 1000)) - 500;
            oracle.add(v);
            put(gs[static_cast<std::size_t>(gi)], 1, v);
            const std::vector<int> touched{gi};
            for (const auto& r : e.on_ingest(gs, touched, i)) {
                consume(r);
            }
            // consumers finish in arbitrary order
            while (!pending.empty() && uniform_below(rng, 3) == 0) {
                const auto pick = uniform_below(rng, pending.size());
                const auto r = pending[pick];
                pending.erase(pending.begin() + static_cast<long>(pick));
                for (const auto& again : e.pipeline_writeback(gs, r.granule.index, 16, r.content, i).ready) {
                    consume(again);
                }
            }
        }
        auto flush = e.on_data_generated(gs, records);
        for (const auto& r : flush.ready) {
            consume(r);
        }
        bool ready_all = flush.ready_all.has_value();
        while (!pending.empty()) {
            const auto r = pending.back();
            pending.pop_back();
            auto more = e.pipeline_writeback(gs, r.granule.index, 16, r.content, records + 1.0);
            for (const auto& again : more.ready) {
                consume(again);
            }
            ready_all = ready_all || more.ready_all.has_value();
        }
        EXPECT_TRUE(ready_all);
        Aggregate total;
        for (const auto& a : results) {
            total.merge(a);
        }
        EXPECT_EQ(total, oracle) << "trial " << trial;
    }
}

TEST(Engine, StreamingFiresCeilRecordsOverX) {
    for (std::int64_t x : {1, 3, 7, 100}) {
        for (std::int64_t records : {1, 6, 7, 50, 301}) {
            auto gs = granules(1);
            TriggerEngine e(0, 0, spec(TriggerKind::default_streaming, x), ComputeType::stateless, 1);
            const std::vector<int> one{0};
            int fires = 0;
            for (std::int64_t i = 0; i < records; ++i) {
                put(gs[0], 1);
                fires += static_cast<int>(e.on_ingest(gs, one, 0.0).size());
            }
            const auto f = e.on_data_generated(gs, 1.0);
            EXPECT_LE(f.ready.size(), 1u);
            fires += static_cast<int>(f.ready.size());
            EXPECT_EQ(fires, (records + x - 1) / x) << "x=" << x << " records=" << records;
        }
    }
}

TEST(Engine, ReadyAllWaitsForInFlightHandoffs) {
    auto gs = granules(2);
    TriggerEngine e(0, 0, spec(TriggerKind::pipelining, 5), ComputeType::stateful_ca, 2);
    put(gs[0], 5);
    put(gs[1], 2);
    const std::vector<int> all{0, 1};
    const auto fired = e.on_ingest(gs, all, 0.0);
    ASSERT_EQ(fired.size(), 1u);
    put(gs[0], 3);  // arrives while the handoff is in flight
    const auto f = e.on_data_generated(gs, 1.0);
    EXPECT_EQ(f.ready.size(), 1u);  // granule 1 only; granule 0 waits for its fold
    EXPECT_FALSE(f.ready_all.has_value());
    const auto back = e.pipeline_writeback(gs, 0, 16, fired[0].content, 2.0);
    ASSERT_EQ(back.ready.size(), 1u);
    EXPECT_TRUE(back.ready[0].final);
    EXPECT_EQ(back.ready[0].records, 4);
    EXPECT_TRUE(back.ready_all.has_value());
}

TEST(Engine, AbandonReleasesFinalFlush) {
    auto gs = granules(1);
    TriggerEngine e(0, 0, spec(TriggerKind::pipelining, 2), ComputeType::stateful_ca, 1);
    put(gs[0], 2);
    const std::vector<int> one{0};
    ASSERT_EQ(e.on_ingest(gs, one, 0.0).size(), 1u);
    put(gs[0], 1);
    const auto f = e.on_data_generated(gs, 1.0);
    EXPECT_TRUE(f.ready.empty());
    EXPECT_FALSE(f.ready_all.has_value());
    const auto a = e.abandon(gs, 0, 2.0);
    ASSERT_EQ(a.ready.size(), 1u);
    EXPECT_EQ(a.ready[0].records, 1);
    EXPECT_TRUE(a.ready_all.has_value());
}
