/*
Copyright 2026 The kadrtc Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/

#include "kadrtc/harness.hpp"

#include "doctest.h"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

using namespace kadrtc;
using namespace std::chrono_literals;
using nlohmann::json;

namespace {

experiment_config small(scenario s, std::size_t n, std::size_t trials, std::uint64_t seed = 1)
{
	experiment_config c;
	c.kind = s;
	c.n_nodes = n;
	c.trials = trials;
	c.net.seed = seed;
	return c;
}

std::vector<std::string> lines(std::string const& s)
{
	std::vector<std::string> out;
	std::istringstream is(s);
	for (std::string l; std::getline(is, l);) out.push_back(l);
	return out;
}

std::vector<std::string> cells(std::string const& line)
{
	std::vector<std::string> out;
	std::string cur;
	for (char c : line)
	{
		if (c == ',') { out.push_back(cur); cur.clear(); }
		else cur.push_back(c);
	}
	out.push_back(cur);
	return out;
}

std::string slurp(std::filesystem::path const& p)
{
	std::ifstream is(p, std::ios::binary);
	return {std::istreambuf_iterator<char>(is), {}};
}

// Probability that one relayed envelope never reaches the far gateway.
// Walks every loss pattern of request and response datagrams over the
// attempts; a retry is sent only when the previous attempt saw no response.
double envelope_loss(double p, int attempts)
{
	struct walk
	{
		double p;
		int attempts;
		double operator()(int attempt, bool delivered) const
		{
			if (attempt == attempts) return delivered ? 0.0 : 1.0;
			double lost = 0;
			for (bool req_ok : {false, true})
				for (bool resp_ok : {false, true})
				{
					double const w = (req_ok ? 1 - p : p) * (resp_ok ? 1 - p : p);
					bool const got = delivered || req_ok;
					// a response only exists if the request arrived
					if (req_ok && resp_ok) lost += w * (got ? 0.0 : 1.0);
					else lost += w * (*this)(attempt + 1, got);
				}
			return lost;
		}
	};
	return walk{p, attempts}(0, false);
}

} // namespace

TEST_CASE("summaries")
{
	auto s = summarize({5, 1, 3});
	CHECK(s.min == 1);
	CHECK(s.median == 3);
	CHECK(s.max == 5);
	CHECK(s.p95 == 5);
	s = summarize({4, 1, 3, 2});
	CHECK(s.median == 2.5);

	std::vector<double> v;
	for (int i = 1; i <= 100; ++i) v.push_back(i);
	CHECK(summarize(v).p95 == 95);
	v.push_back(101);
	CHECK(summarize(v).p95 == 96);  // nearest rank: ceil(0.95 * 101) = 96
}

TEST_CASE("aggregates are recomputable from the trial records")
{
	std::vector<trial_record> t;
	for (std::size_t i = 0; i < 10; ++i)
	{
		trial_record r;
		r.trial = i;
		r.success = i % 4 != 3;
		r.elapsed_ms = std::int64_t(100 + 10 * i);
		r.hops = int(i % 3);
		r.messages = 7;
		t.push_back(r);
	}
	auto const a = compute_aggregates(t);
	CHECK(a.trials == 10);
	CHECK(a.failures == 2);
	CHECK(a.failure_rate == 0.2);
	CHECK(a.messages_sent == 70);
	REQUIRE(a.connection_time_ms);
	CHECK(a.connection_time_ms->min == 100);
	CHECK(a.connection_time_ms->max == 190);
	CHECK_FALSE(a.survival_s);

	std::vector<double> ok;
	for (auto const& r : t)
		if (r.success) ok.push_back(double(r.elapsed_ms));
	CHECK(a.connection_time_ms->median == summarize(ok).median);
	CHECK(compute_aggregates({}).failure_rate == 0);
}

TEST_CASE("config validation")
{
	CHECK_NOTHROW(experiment_config{}.validate());
	auto bad = [](auto mutate) {
		experiment_config c;
		mutate(c);
		CHECK_THROWS_AS(c.validate(), config_error);
		CHECK_THROWS_AS(run_experiment(c), config_error);
	};
	bad([](experiment_config& c) { c.trials = 0; });
	bad([](experiment_config& c) { c.churn_rate = 1.0; });
	bad([](experiment_config& c) { c.churn_rate = -0.1; });
	bad([](experiment_config& c) { c.n_nodes = 1; });
	bad([](experiment_config& c) { c.alpha = 0; });
	bad([](experiment_config& c) { c.alpha = 30; });
	bad([](experiment_config& c) { c.session_duration = 7s; });
	bad([](experiment_config& c) { c.net.loss_rate = 1.5; });
	bad([](experiment_config& c) { c.net.latency_min = 90ms; c.net.latency_max = 10ms; });
	CHECK(scenario_from_string("churn_recovery") == scenario::churn_recovery);
	CHECK_FALSE(scenario_from_string("nope"));
	CHECK(std::string(to_string(scenario::lookup_scaling)) == "lookup_scaling");
}

TEST_CASE("empty report exports a header-only CSV")
{
	metrics_report r;
	auto const l = lines(to_csv(r));
	REQUIRE(l.size() == 1);
	CHECK(l[0].rfind("trial,success,elapsed_ms", 0) == 0);
}

TEST_CASE("connection_time report: CSV and JSON agree and reruns are byte-identical")
{
	auto const cfg = small(scenario::connection_time, 16, 100, 9);
	auto const r = run_experiment(cfg);
	CHECK(r.ok());
	CHECK(r.trials.size() == 100);
	CHECK(r.aggregates == compute_aggregates(r.trials));
	CHECK(r.aggregates.failure_rate == 0);

	auto const csv = to_csv(r);
	auto const l = lines(csv);
	REQUIRE(l.size() == 102);  // header, 100 trials, aggregate
	auto const header = cells(l[0]);
	auto const agg = cells(l.back());
	REQUIRE(agg.size() == header.size());
	CHECK(agg[0] == "aggregate");
	auto col = [&](std::string const& name) {
		auto const i = std::find(header.begin(), header.end(), name) - header.begin();
		REQUIRE(std::size_t(i) < header.size());
		return agg[std::size_t(i)];
	};

	auto const j = json::parse(to_json(r));
	CHECK(j["trials"].size() == 100);
	CHECK(std::stod(col("failure_rate")) == j["aggregate"]["failure_rate"].get<double>());
	CHECK(std::stod(col("time_median_ms")) == j["aggregate"]["connection_time_ms"]["median"].get<double>());
	CHECK(std::stod(col("time_p95_ms")) == j["aggregate"]["connection_time_ms"]["p95"].get<double>());
	CHECK(std::stoull(col("messages_total")) == j["aggregate"]["messages_sent"].get<std::uint64_t>());
	CHECK(j["config"]["nodes"] == 16);
	CHECK(j["aggregate"]["session_survival_s"].is_null());

	// per-trial rows match the records
	for (std::size_t i = 0; i < 100; ++i)
	{
		auto const row = cells(l[i + 1]);
		CHECK(row[0] == std::to_string(r.trials[i].trial));
		CHECK(row[2] == std::to_string(r.trials[i].elapsed_ms));
	}

	auto const dir = std::filesystem::temp_directory_path() / "kadrtc_test_harness";
	std::filesystem::create_directories(dir);
	export_report(r, dir / "a.csv", report_format::csv);
	export_report(r, dir / "b.csv", report_format::csv);
	export_report(r, dir / "a.json", report_format::json);
	CHECK(slurp(dir / "a.csv") == slurp(dir / "b.csv"));
	CHECK(slurp(dir / "a.csv") == csv);
	CHECK(slurp(dir / "a.json") == to_json(r));
	CHECK_THROWS_AS(export_report(r, dir / "missing" / "x.csv", report_format::csv), std::runtime_error);

	auto const again = run_experiment(cfg);
	CHECK(to_csv(again) == csv);
	CHECK(to_json(again) == to_json(r));

	// every exchange needs a request and a reply across the network
	for (auto const& t : r.trials) CHECK(t.elapsed_ms >= 2 * cfg.net.latency_min.count());
}

TEST_CASE("a peer that never registered fails fast")
{
	sim_cluster c(sim_network_config{}, node_config{}, 4);
	REQUIRE(c.bootstrap(12));
	auto a = loopback_client::open(c.gateway_at(1));
	auto b = loopback_client::open(c.gateway_at(5));
	gateway_frame reg;
	reg.op = "register";
	reg.name = "alice";
	a->send(reg);
	c.net().run_for(5s);
	auto const out = measure_connection(c, 0, c.gateway_at(1), a, "bob", b);
	CHECK_FALSE(out.established);
	CHECK(out.session.empty());
	CHECK(out.elapsed_ms < 10'000);
}

TEST_CASE("lookup_scaling report")
{
	auto const r = run_experiment(small(scenario::lookup_scaling, 64, 20, 3));
	CHECK(r.ok());
	CHECK(r.aggregates.failures == 0);
	REQUIRE(r.occupancy);
	int total = 0;
	for (auto const& [buckets, nodes] : r.occupancy->histogram) total += nodes;
	CHECK(total == 64);
	CHECK(r.occupancy->mean_occupied <= 4 * std::log2(64.0));
	REQUIRE(r.aggregates.hops);
	CHECK(r.aggregates.hops->max <= 2 * std::log2(64.0));
}

TEST_CASE("retry-tree oracle")
{
	CHECK(envelope_loss(0.0, 2) == 0.0);
	CHECK(envelope_loss(1.0, 2) == 1.0);
	// the request must be lost on every attempt
	CHECK(envelope_loss(0.05, 2) == doctest::Approx(0.05 * 0.05));
	CHECK(envelope_loss(0.3, 3) == doctest::Approx(0.3 * 0.3 * 0.3));
}

TEST_CASE("failure_rate at loss 0.05 matches the retry-tree expectation")
{
	auto cfg = small(scenario::failure_rate, 64, 1000, 11);
	cfg.net.loss_rate = 0.05;
	auto const r = run_experiment(cfg);
	CHECK(r.ok());

	// six envelopes per exchange, each on one RPC with one retry
	int const attempts = 1 + node_config{}.rpc_retries;
	double const expected = 1 - std::pow(1 - envelope_loss(0.05, attempts), 6);
	double const sd = std::sqrt(expected * (1 - expected) / double(cfg.trials));
	MESSAGE("failure_rate " << r.aggregates.failure_rate << " expected " << expected);
	CHECK(r.aggregates.failure_rate <= 0.05);
	CHECK(std::abs(r.aggregates.failure_rate - expected) <= 4 * sd + 0.005);
}

TEST_CASE("failure_rate extremes")
{
	auto cfg = small(scenario::failure_rate, 16, 10, 2);
	cfg.net.loss_rate = 1.0;
	auto const r = run_experiment(cfg);
	CHECK(r.ok());
	CHECK(r.aggregates.failure_rate == 1.0);
	CHECK_FALSE(r.aggregates.connection_time_ms);
	CHECK(lines(to_csv(r)).size() == 12);
}

TEST_CASE("session_survival reports")
{
	auto cfg = small(scenario::session_survival, 16, 5, 6);
	cfg.session_duration = 30s;
	auto r = run_experiment(cfg);
	CHECK(r.ok());
	REQUIRE(r.aggregates.survival_s);
	CHECK(r.aggregates.survival_s->min == 30);

	cfg.kill_gateways = true;
	r = run_experiment(cfg);
	CHECK(r.ok());
	for (auto const& t : r.trials)
	{
		REQUIRE(t.survival_s);
		CHECK(*t.survival_s < 30);
		REQUIRE(t.detect_windows);
		CHECK(*t.detect_windows <= 2);
	}
	auto const j = json::parse(to_json(r));
	CHECK(j["aggregate"]["session_survival_s"]["max"].get<double>() < 30);
}

TEST_CASE("churn_recovery report")
{
	auto cfg = small(scenario::churn_recovery, 60, 20, 8);
	cfg.churn_rate = 0.2;
	auto const r = run_experiment(cfg);
	CHECK(r.ok());
	CHECK(r.aggregates.failures == 0);
}
