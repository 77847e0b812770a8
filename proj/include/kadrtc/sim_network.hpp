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

#include "kadrtc/random.hpp"
#include "kadrtc/transport.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace kadrtc {

struct sim_network_config
{
	milliseconds latency_min{10};
	milliseconds latency_max{50};
	double loss_rate = 0.0;
	std::uint64_t seed = 1;
	// endpoints in different groups cannot reach each other; endpoints not
	// listed in any group are unaffected
	std::vector<std::vector<endpoint>> partitions;

	// throws std::invalid_argument
	void validate() const;
};

struct delivery_event
{
	timestamp time{0};
	endpoint src;
	endpoint dst;
	std::string kind;
	std::string rpc_id;

	friend bool operator==(delivery_event const&, delivery_event const&) = default;
};

// Discrete-event datagram network over a virtual clock. Events run in
// (time, sequence number) order, so two runs with the same seed, config
// and workload produce identical traces. Single-threaded.
class sim_network
{
public:
	// labels a delivered datagram for the trace: (kind, rpc_id)
	using describer = std::function<std::pair<std::string, std::string>(std::string_view)>;

	explicit sim_network(sim_network_config cfg = {});
	~sim_network();

	sim_network(sim_network const&) = delete;
	sim_network& operator=(sim_network const&) = delete;

	// A fresh address of the form 10.x.y.z:4000.
	endpoint allocate_endpoint();
	std::unique_ptr<transport> bind(endpoint const& ep);

	// Churn: a killed endpoint neither sends nor receives until revived.
	// Its timers keep running; the node behind it is simply cut off.
	void kill(endpoint const& ep);
	void revive(endpoint const& ep);
	bool alive(endpoint const& ep) const;

	timestamp now() const { return m_now; }

	// Runs every event up to and including `until` and returns the packet
	// deliveries that happened. The clock ends at `until`.
	std::vector<delivery_event> advance_clock(timestamp until);

	// Runs events until `done()` holds or the clock would pass `deadline`.
	bool run_until(std::function<bool()> const& done, timestamp deadline);
	void run_for(milliseconds d) { advance_to(m_now + d, nullptr); }

	bool idle() const { return m_queue.empty(); }

	sim_network_config const& config() const { return m_config; }
	void set_loss_rate(double p);
	void set_latency(milliseconds lo, milliseconds hi);
	void set_partitions(std::vector<std::vector<endpoint>> groups);

	std::uint64_t datagrams_sent() const { return m_sent; }
	std::uint64_t datagrams_delivered() const { return m_delivered; }
	std::uint64_t datagrams_dropped() const { return m_dropped; }

	void enable_trace(bool on, describer d = {});
	std::vector<delivery_event> const& trace() const { return m_trace; }
	// one tab-separated line per delivery: time_ms src dst kind rpc_id
	void write_trace(std::ostream& os) const;

private:
	class sim_transport;
	friend class sim_transport;

	struct event
	{
		timestamp time;
		std::uint64_t seq;
		timer_id timer = 0;  // nonzero for timer events
		endpoint src;
		endpoint dst;
		std::string payload;
	};

	struct later
	{
		bool operator()(event const& a, event const& b) const
		{
			if (a.time != b.time) return a.time > b.time;
			return a.seq > b.seq;
		}
	};

	void send(endpoint const& from, endpoint const& to, std::string_view datagram);
	timer_id schedule(sim_transport* owner, milliseconds delay, std::function<void()> fn);
	void cancel(timer_id id);
	void unbind(sim_transport* t);

	void push(event e);
	void advance_to(timestamp until, std::vector<delivery_event>* out);
	void dispatch(event& e, std::vector<delivery_event>* out);
	bool partitioned(endpoint const& a, endpoint const& b) const;

	sim_network_config m_config;
	rng m_rng;
	timestamp m_now{0};
	std::uint64_t m_seq = 0;
	timer_id m_next_timer = 1;
	std::uint32_t m_next_host = 1;

	std::vector<event> m_queue;
	struct timer_entry { sim_transport* owner; std::function<void()> fn; };
	std::unordered_map<timer_id, timer_entry> m_timers;
	std::unordered_map<endpoint, sim_transport*, endpoint_hash> m_bound;
	std::unordered_set<endpoint, endpoint_hash> m_dead;
	std::unordered_map<endpoint, std::size_t, endpoint_hash> m_partition_of;

	std::uint64_t m_sent = 0;
	std::uint64_t m_delivered = 0;
	std::uint64_t m_dropped = 0;

	bool m_tracing = false;
	describer m_describe;
	std::vector<delivery_event> m_trace;
};

} // namespace kadrtc
