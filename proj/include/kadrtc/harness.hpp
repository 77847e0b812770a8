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

#pragma once

#include "kadrtc/node.hpp"
#include "kadrtc/signaling.hpp"
#include "kadrtc/sim_network.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace kadrtc {

struct config_error : std::invalid_argument
{
	using std::invalid_argument::invalid_argument;
};

// A simulated network of nodes plus synchronous helpers that drive the
// virtual clock until an asynchronous operation completes.
class sim_cluster
{
public:
	sim_cluster(sim_network_config net, node_config cfg, std::uint64_t seed);
	~sim_cluster();

	sim_network& net() { return *m_net; }
	node_config const& config() const { return m_config; }
	rng& random() { return m_rng; }

	std::size_t size() const { return m_nodes.size(); }
	node& at(std::size_t i) { return *m_nodes[i]; }
	node& add_node();
	node& add_node(node_id id);

	// Joins nodes one after another through node 0 until there are `n`.
	// Returns false if any join failed.
	bool bootstrap(std::size_t n);

	void kill(node& n) { m_net->kill(n.address()); }
	void revive(node& n) { m_net->revive(n.address()); }
	bool alive(node const& n) const { return m_net->alive(n.address()); }

	// Brute-force k closest live nodes to `target`, skipping `exclude`.
	std::vector<node_id> oracle_closest(node_id const& target, std::size_t k
		, std::optional<node_id> exclude = std::nullopt) const;

	gateway& gateway_at(std::size_t i);

	// Starts an operation and runs the network until its callback fires.
	// Throws std::runtime_error if it does not finish within `limit`.
	template <class R, class Start>
	R await(Start start, milliseconds limit = milliseconds(3'600'000))
	{
		auto out = std::make_shared<std::optional<R>>();
		start([out](R r) { *out = std::move(r); });
		m_net->run_until([&] { return out->has_value(); }, m_net->now() + limit);
		if (!out->has_value()) throw std::runtime_error("sim_cluster: operation did not complete");
		return std::move(**out);
	}

	lookup_result find_node(node& from, node_id const& target);
	value_lookup_result find_value(node& from, node_id const& key);
	store_result store(node& from, node_id const& key, std::string const& value, seconds ttl, bool republish = true);
	join_report join(node& n, endpoint const& bootstrap);

private:
	std::unique_ptr<sim_network> m_net;
	node_config m_config;
	rng m_rng;
	std::vector<std::unique_ptr<node>> m_nodes;
	std::map<std::size_t, std::unique_ptr<gateway>> m_gateways;
};

enum class scenario
{
	lookup_scaling,
	connection_time,
	failure_rate,
	session_survival,
	churn_recovery,
};

char const* to_string(scenario s);
std::optional<scenario> scenario_from_string(std::string_view s);

struct experiment_config
{
	scenario kind = scenario::connection_time;
	std::size_t n_nodes = 64;
	std::size_t k = 20;
	std::size_t alpha = 3;
	// loss applies once bootstrap is over
	sim_network_config net;
	std::size_t trials = 100;
	double churn_rate = 0.0;
	seconds session_duration{60};
	// session_survival: kill both gateways part-way through each session
	bool kill_gateways = false;
	milliseconds rpc_timeout{1000};

	// throws config_error
	void validate() const;
};

struct trial_record
{
	std::size_t trial = 0;
	bool success = false;
	std::int64_t elapsed_ms = 0;
	int hops = 0;
	std::uint64_t messages = 0;
	std::optional<double> survival_s;
	// keepalive windows between a gateway kill and the detected drop
	std::optional<int> detect_windows;
};

struct summary
{
	double min = 0;
	double median = 0;
	double p95 = 0;
	double max = 0;

	friend bool operator==(summary const&, summary const&) = default;
};

// median averages the middle pair; p95 is nearest-rank
summary summarize(std::vector<double> values);

struct report_aggregates
{
	std::size_t trials = 0;
	std::size_t failures = 0;
	double failure_rate = 0;
	std::optional<summary> connection_time_ms;  // established trials only
	std::optional<summary> hops;
	std::optional<summary> survival_s;
	std::uint64_t messages_sent = 0;

	friend bool operator==(report_aggregates const&, report_aggregates const&) = default;
};

report_aggregates compute_aggregates(std::vector<trial_record> const& trials);

struct occupancy_report
{
	double mean_occupied = 0;
	// occupied-bucket count -> number of nodes
	std::map<int, int> histogram;
};

struct metrics_report
{
	experiment_config config;
	std::vector<trial_record> trials;
	report_aggregates aggregates;
	std::optional<occupancy_report> occupancy;
	// invariant checks the scenario failed; empty means it passed
	std::vector<std::string> violations;

	bool ok() const { return violations.empty(); }
};

metrics_report run_experiment(experiment_config const& cfg);

struct connection_outcome
{
	bool established = false;
	std::int64_t elapsed_ms = 0;
	int hops = 0;
	std::uint64_t messages = 0;
	std::string session;
	// blobs arrived byte-identical to what was sent
	bool blobs_intact = true;
};

// Runs connect + offer + answer + two candidates each way between two
// registered loopback clients. Gives up after 10 s of virtual time.
connection_outcome measure_connection(sim_cluster& sim, std::size_t trial
	, gateway& gw_a, std::shared_ptr<loopback_client> const& a
	, std::string const& name_b, std::shared_ptr<loopback_client> const& b);

// Exchanges keepalive envelopes every 5 s over an established session and
// returns the virtual seconds until two consecutive keepalive windows were
// missed, or `duration` if none were.
struct survival_outcome
{
	double survival_s = 0;
	std::optional<timestamp> dropped_at;
};

survival_outcome measure_session_survival(sim_cluster& sim, std::size_t trial
	, std::string const& session, std::shared_ptr<loopback_client> const& a
	, std::shared_ptr<loopback_client> const& b, seconds duration
	, std::vector<std::pair<timestamp, node*>> const& kills);

// 1 KiB synthetic SDP/ICE stand-in with the trial id embedded
std::string synthetic_blob(std::size_t trial, char side, signal_kind kind, int index);

enum class report_format { csv, json };

std::string to_csv(metrics_report const& r);
std::string to_json(metrics_report const& r);
// throws std::runtime_error on IO failure
void export_report(metrics_report const& r, std::filesystem::path const& path, report_format format);

} // namespace kadrtc
