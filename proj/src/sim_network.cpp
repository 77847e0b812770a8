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

#include "kadrtc/sim_network.hpp"
#include "kadrtc/protocol.hpp"

#include <algorithm>
#include <ostream>
#include <stdexcept>

namespace kadrtc {

void sim_network_config::validate() const
{
	if (latency_min.count() < 0 || latency_min > latency_max)
		throw std::invalid_argument("sim_network_config: need 0 <= latency_min <= latency_max");
	if (!(loss_rate >= 0.0 && loss_rate <= 1.0))
		throw std::invalid_argument("sim_network_config: loss_rate must be in [0, 1]");
}

class sim_network::sim_transport final : public transport
{
public:
	sim_transport(sim_network& net, endpoint ep) : m_net(&net), m_address(std::move(ep)) {}
	~sim_transport() override { if (m_net) m_net->unbind(this); }

	void detach() { m_net = nullptr; }

	endpoint const& local_address() const override { return m_address; }

	void send(endpoint const& to, std::string_view datagram) override
	{
		if (datagram.size() > max_datagram_size) throw transport_error("datagram too large");
		if (m_net) m_net->send(m_address, to, datagram);
	}

	void set_receive_handler(receive_handler handler) override { m_handler = std::move(handler); }

	timestamp now() const override { return m_net ? m_net->now() : timestamp(0); }

	timer_id schedule(milliseconds delay, std::function<void()> fn) override
	{
		return m_net ? m_net->schedule(this, delay, std::move(fn)) : 0;
	}

	void cancel(timer_id id) override { if (m_net) m_net->cancel(id); }

	receive_handler const& handler() const { return m_handler; }

private:
	sim_network* m_net;
	endpoint m_address;
	receive_handler m_handler;
};

sim_network::sim_network(sim_network_config cfg)
	: m_config(std::move(cfg))
	, m_rng(m_config.seed)
{
	m_config.validate();
	set_partitions(m_config.partitions);
}

sim_network::~sim_network()
{
	for (auto& [ep, t] : m_bound) t->detach();
}

endpoint sim_network::allocate_endpoint()
{
	std::uint32_t const h = m_next_host++;
	return endpoint("10." + std::to_string((h >> 16) & 0xff) + "." + std::to_string((h >> 8) & 0xff)
		+ "." + std::to_string(h & 0xff) + ":4000");
}

std::unique_ptr<transport> sim_network::bind(endpoint const& ep)
{
	if (m_bound.count(ep)) throw std::invalid_argument("sim_network: endpoint already bound: " + ep.str());
	auto t = std::make_unique<sim_transport>(*this, ep);
	m_bound.emplace(ep, t.get());
	m_dead.erase(ep);
	return t;
}

void sim_network::unbind(sim_transport* t)
{
	m_bound.erase(t->local_address());
	for (auto i = m_timers.begin(); i != m_timers.end();)
	{
		if (i->second.owner == t) i = m_timers.erase(i);
		else ++i;
	}
}

void sim_network::kill(endpoint const& ep) { m_dead.insert(ep); }
void sim_network::revive(endpoint const& ep) { m_dead.erase(ep); }
bool sim_network::alive(endpoint const& ep) const { return m_bound.count(ep) && !m_dead.count(ep); }

void sim_network::set_loss_rate(double p)
{
	sim_network_config c = m_config;
	c.loss_rate = p;
	c.validate();
	m_config = c;
}

void sim_network::set_latency(milliseconds lo, milliseconds hi)
{
	sim_network_config c = m_config;
	c.latency_min = lo;
	c.latency_max = hi;
	c.validate();
	m_config = c;
}

void sim_network::set_partitions(std::vector<std::vector<endpoint>> groups)
{
	m_partition_of.clear();
	for (std::size_t g = 0; g < groups.size(); ++g)
		for (auto const& ep : groups[g]) m_partition_of[ep] = g;
	m_config.partitions = std::move(groups);
}

bool sim_network::partitioned(endpoint const& a, endpoint const& b) const
{
	if (m_partition_of.empty()) return false;
	auto const i = m_partition_of.find(a);
	auto const j = m_partition_of.find(b);
	return i != m_partition_of.end() && j != m_partition_of.end() && i->second != j->second;
}

void sim_network::push(event e)
{
	m_queue.push_back(std::move(e));
	std::push_heap(m_queue.begin(), m_queue.end(), later{});
}

void sim_network::send(endpoint const& from, endpoint const& to, std::string_view datagram)
{
	++m_sent;
	// both draws happen for every packet so the random stream does not
	// depend on which packets are dropped
	bool const lost = m_rng.bernoulli(m_config.loss_rate);
	auto const latency = milliseconds(m_rng.uniform_int(m_config.latency_min.count()
		, m_config.latency_max.count()));
	if (lost || m_dead.count(from) || partitioned(from, to))
	{
		++m_dropped;
		return;
	}
	push(event{m_now + latency, m_seq++, 0, from, to, std::string(datagram)});
}

timer_id sim_network::schedule(sim_transport* owner, milliseconds delay, std::function<void()> fn)
{
	timer_id const id = m_next_timer++;
	m_timers.emplace(id, timer_entry{owner, std::move(fn)});
	push(event{m_now + std::max(delay, milliseconds(0)), m_seq++, id, {}, {}, {}});
	return id;
}

void sim_network::cancel(timer_id id) { m_timers.erase(id); }

void sim_network::dispatch(event& e, std::vector<delivery_event>* out)
{
	if (e.timer)
	{
		auto const i = m_timers.find(e.timer);
		if (i == m_timers.end()) return;
		auto fn = std::move(i->second.fn);
		m_timers.erase(i);
		fn();
		return;
	}

	auto const t = m_bound.find(e.dst);
	if (t == m_bound.end() || m_dead.count(e.dst) || !t->second->handler())
	{
		++m_dropped;
		return;
	}
	++m_delivered;
	if (out || m_tracing)
	{
		delivery_event d{e.time, e.src, e.dst, {}, {}};
		if (m_describe) std::tie(d.kind, d.rpc_id) = m_describe(e.payload);
		if (m_tracing) m_trace.push_back(d);
		if (out) out->push_back(std::move(d));
	}
	// the handler may destroy or rebind transports; copy it first
	auto const handler = t->second->handler();
	handler(e.src, e.payload);
}

void sim_network::advance_to(timestamp until, std::vector<delivery_event>* out)
{
	while (!m_queue.empty() && m_queue.front().time <= until)
	{
		std::pop_heap(m_queue.begin(), m_queue.end(), later{});
		event e = std::move(m_queue.back());
		m_queue.pop_back();
		m_now = e.time;
		dispatch(e, out);
	}
	m_now = std::max(m_now, until);
}

std::vector<delivery_event> sim_network::advance_clock(timestamp until)
{
	if (until < m_now) throw std::invalid_argument("sim_network: clock cannot go backward");
	std::vector<delivery_event> out;
	advance_to(until, &out);
	return out;
}

bool sim_network::run_until(std::function<bool()> const& done, timestamp deadline)
{
	while (!done())
	{
		if (m_queue.empty() || m_queue.front().time > deadline)
		{
			m_now = std::max(m_now, deadline);
			return done();
		}
		std::pop_heap(m_queue.begin(), m_queue.end(), later{});
		event e = std::move(m_queue.back());
		m_queue.pop_back();
		m_now = e.time;
		dispatch(e, nullptr);
	}
	return true;
}

void sim_network::enable_trace(bool on, describer d)
{
	m_tracing = on;
	m_describe = d ? std::move(d) : describer(describe_datagram);
}

void sim_network::write_trace(std::ostream& os) const
{
	for (auto const& d : m_trace)
		os << d.time.count() << '\t' << d.src << '\t' << d.dst << '\t' << d.kind << '\t' << d.rpc_id << '\n';
}

} // namespace kadrtc
