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

#include "doctest.h"

#include <map>
#include <set>
#include <sstream>

using namespace kadrtc;

namespace {

struct probe
{
	std::unique_ptr<transport> t;
	std::vector<std::pair<timestamp, std::string>> got;

	probe(sim_network& net, endpoint ep) : t(net.bind(ep))
	{
		t->set_receive_handler([this](endpoint const&, std::string_view d) { got.emplace_back(t->now(), std::string(d)); });
	}
};

sim_network_config fixed(std::int64_t lo, std::int64_t hi, double loss = 0.0, std::uint64_t seed = 1)
{
	sim_network_config c;
	c.latency_min = milliseconds(lo);
	c.latency_max = milliseconds(hi);
	c.loss_rate = loss;
	c.seed = seed;
	return c;
}

// a fixed pseudo-random workload of sends and timers
std::string run_workload(std::uint64_t seed)
{
	sim_network net(fixed(10, 50, 0.2, seed));
	net.enable_trace(true, [](std::string_view d) { return std::make_pair(std::string("DATA"), std::string(d)); });
	std::vector<std::unique_ptr<probe>> ps;
	for (int i = 0; i < 8; ++i) ps.push_back(std::make_unique<probe>(net, net.allocate_endpoint()));
	rng r(555);
	for (int step = 0; step < 500; ++step)
	{
		auto& a = *ps[r.uniform(ps.size())];
		auto& b = *ps[r.uniform(ps.size())];
		a.t->send(b.t->local_address(), "m" + std::to_string(step));
		if (step % 50 == 0) net.advance_clock(net.now() + milliseconds(r.uniform_int(0, 40)));
	}
	net.advance_clock(net.now() + milliseconds(1000));
	std::ostringstream os;
	net.write_trace(os);
	return os.str();
}

} // namespace

TEST_CASE("fixed latency delivers exactly on time")
{
	sim_network net(fixed(10, 10));
	probe a(net, net.allocate_endpoint()), b(net, net.allocate_endpoint());
	net.advance_clock(timestamp(5));
	a.t->send(b.t->local_address(), "hello");
	net.advance_clock(timestamp(14));
	CHECK(b.got.empty());
	auto const events = net.advance_clock(timestamp(15));
	REQUIRE(b.got.size() == 1);
	CHECK(b.got[0].first == timestamp(15));
	CHECK(b.got[0].second == "hello");
	REQUIRE(events.size() == 1);
	CHECK(events[0].time == timestamp(15));
	CHECK(events[0].src == a.t->local_address());
	CHECK(events[0].dst == b.t->local_address());
}

TEST_CASE("total loss delivers nothing")
{
	sim_network net(fixed(10, 50, 1.0));
	probe a(net, net.allocate_endpoint()), b(net, net.allocate_endpoint());
	for (int i = 0; i < 100; ++i) a.t->send(b.t->local_address(), "x");
	net.advance_clock(timestamp(1000));
	CHECK(b.got.empty());
	CHECK(net.datagrams_sent() == 100);
	CHECK(net.datagrams_dropped() == 100);
}

TEST_CASE("same seed, same workload, identical trace")
{
	std::string const a = run_workload(7), b = run_workload(7), c = run_workload(8);
	CHECK(!a.empty());
	CHECK(a == b);
	CHECK(a != c);
}

TEST_CASE("advance_clock with nothing pending")
{
	sim_network net;
	CHECK(net.advance_clock(timestamp(250)).empty());
	CHECK(net.now() == timestamp(250));
	CHECK_THROWS_AS(net.advance_clock(timestamp(100)), std::invalid_argument);
}

TEST_CASE("events at the same instant keep send order")
{
	sim_network net(fixed(20, 20));
	probe a(net, net.allocate_endpoint()), b(net, net.allocate_endpoint());
	for (int i = 0; i < 50; ++i) a.t->send(b.t->local_address(), std::to_string(i));
	net.advance_clock(timestamp(100));
	REQUIRE(b.got.size() == 50);
	for (int i = 0; i < 50; ++i) CHECK(b.got[std::size_t(i)].second == std::to_string(i));
}

TEST_CASE("10,000 random sends arrive within the latency bounds")
{
	sim_network net(fixed(10, 50, 0.0, 3));
	std::vector<std::unique_ptr<probe>> ps;
	for (int i = 0; i < 10; ++i) ps.push_back(std::make_unique<probe>(net, net.allocate_endpoint()));
	rng r(4);
	std::map<std::string, timestamp> sent_at;
	for (int i = 0; i < 10000; ++i)
	{
		if (i % 100 == 0) net.advance_clock(net.now() + milliseconds(r.uniform_int(0, 30)));
		auto& a = *ps[r.uniform(ps.size())];
		auto& b = *ps[r.uniform(ps.size())];
		std::string const tag = std::to_string(i);
		sent_at[tag] = net.now();
		a.t->send(b.t->local_address(), tag);
	}
	net.advance_clock(net.now() + milliseconds(100));
	std::size_t delivered = 0;
	std::set<std::int64_t> latencies;
	for (auto const& p : ps)
	{
		for (auto const& [at, tag] : p->got)
		{
			auto const lat = (at - sent_at.at(tag)).count();
			REQUIRE(lat >= 10);
			REQUIRE(lat <= 50);
			latencies.insert(lat);
			++delivered;
		}
	}
	CHECK(delivered == 10000);
	// every whole millisecond in the range shows up
	CHECK(latencies.size() == 41);
}

TEST_CASE("loss rate is roughly honoured")
{
	sim_network net(fixed(1, 1, 0.3, 9));
	probe a(net, net.allocate_endpoint()), b(net, net.allocate_endpoint());
	for (int i = 0; i < 20000; ++i) a.t->send(b.t->local_address(), "x");
	net.advance_clock(timestamp(10));
	double const rate = double(b.got.size()) / 20000.0;
	CHECK(rate > 0.68);
	CHECK(rate < 0.72);
}

TEST_CASE("killed endpoints neither send nor receive, but their timers run")
{
	sim_network net(fixed(10, 10));
	probe a(net, net.allocate_endpoint()), b(net, net.allocate_endpoint());
	net.kill(b.t->local_address());
	CHECK_FALSE(net.alive(b.t->local_address()));
	bool fired = false;
	b.t->schedule(milliseconds(5), [&] { fired = true; });
	a.t->send(b.t->local_address(), "to dead");
	b.t->send(a.t->local_address(), "from dead");
	net.advance_clock(timestamp(50));
	CHECK(fired);
	CHECK(a.got.empty());
	CHECK(b.got.empty());

	net.revive(b.t->local_address());
	a.t->send(b.t->local_address(), "again");
	net.advance_clock(timestamp(100));
	CHECK(b.got.size() == 1);
}

TEST_CASE("a datagram in flight to an endpoint that dies is dropped")
{
	sim_network net(fixed(10, 10));
	probe a(net, net.allocate_endpoint()), b(net, net.allocate_endpoint());
	a.t->send(b.t->local_address(), "x");
	net.advance_clock(timestamp(5));
	net.kill(b.t->local_address());
	net.advance_clock(timestamp(20));
	CHECK(b.got.empty());
}

TEST_CASE("partitions")
{
	sim_network net(fixed(1, 1));
	probe a(net, net.allocate_endpoint()), b(net, net.allocate_endpoint()), c(net, net.allocate_endpoint());
	net.set_partitions({{a.t->local_address()}, {b.t->local_address()}});
	a.t->send(b.t->local_address(), "ab");
	a.t->send(c.t->local_address(), "ac");
	c.t->send(b.t->local_address(), "cb");
	net.advance_clock(timestamp(10));
	CHECK(b.got.size() == 1);
	CHECK(b.got[0].second == "cb");
	CHECK(c.got.size() == 1);
	net.set_partitions({});
	a.t->send(b.t->local_address(), "ab");
	net.advance_clock(timestamp(20));
	CHECK(b.got.size() == 2);
}

TEST_CASE("timers fire in order and can be cancelled")
{
	sim_network net;
	auto t = net.bind(net.allocate_endpoint());
	std::vector<int> order;
	t->schedule(milliseconds(30), [&] { order.push_back(3); });
	auto const gone = t->schedule(milliseconds(20), [&] { order.push_back(2); });
	t->schedule(milliseconds(10), [&] { order.push_back(1); });
	t->schedule(milliseconds(10), [&] { order.push_back(11); });
	t->cancel(gone);
	net.advance_clock(timestamp(100));
	CHECK(order == std::vector<int>{1, 11, 3});
}

TEST_CASE("run_until stops at the first event that satisfies the predicate")
{
	sim_network net(fixed(10, 10));
	probe a(net, net.allocate_endpoint()), b(net, net.allocate_endpoint());
	a.t->send(b.t->local_address(), "x");
	CHECK(net.run_until([&] { return !b.got.empty(); }, timestamp(1000)));
	CHECK(net.now() == timestamp(10));
	CHECK_FALSE(net.run_until([] { return false; }, timestamp(500)));
	CHECK(net.now() == timestamp(500));
}

TEST_CASE("oversize datagrams are a local error")
{
	sim_network net;
	auto t = net.bind(net.allocate_endpoint());
	CHECK_THROWS_AS(t->send(endpoint("10.0.0.9:4000"), std::string(65508, 'x')), transport_error);
	CHECK_NOTHROW(t->send(endpoint("10.0.0.9:4000"), std::string(65507, 'x')));
}

TEST_CASE("config validation")
{
	CHECK_THROWS_AS(sim_network(fixed(50, 10)), std::invalid_argument);
	CHECK_THROWS_AS(sim_network(fixed(10, 50, 1.5)), std::invalid_argument);
	CHECK_THROWS_AS(sim_network(fixed(10, 50, -0.1)), std::invalid_argument);
	sim_network net;
	CHECK_THROWS_AS(net.set_loss_rate(2.0), std::invalid_argument);
	auto t = net.bind(endpoint("10.0.0.1:4000"));
	CHECK_THROWS_AS(net.bind(endpoint("10.0.0.1:4000")), std::invalid_argument);
}

TEST_CASE("write_trace format")
{
	sim_network net(fixed(10, 10));
	net.enable_trace(true, [](std::string_view) { return std::make_pair(std::string("PING"), std::string("abc")); });
	probe a(net, endpoint("10.0.0.1:4000")), b(net, endpoint("10.0.0.2:4000"));
	a.t->send(b.t->local_address(), "x");
	net.advance_clock(timestamp(20));
	std::ostringstream os;
	net.write_trace(os);
	CHECK(os.str() == "10\t10.0.0.1:4000\t10.0.0.2:4000\tPING\tabc\n");
}

TEST_CASE("the network outliving or predeceasing its transports")
{
	auto net = std::make_unique<sim_network>();
	auto t = net->bind(net->allocate_endpoint());
	t->schedule(milliseconds(5), [] {});
	net.reset();
	CHECK_NOTHROW(t->send(endpoint("10.0.0.9:4000"), "x"));
	t.reset();

	sim_network net2;
	{
		auto u = net2.bind(net2.allocate_endpoint());
		u->schedule(milliseconds(5), [] { FAIL("timer of a destroyed transport fired"); });
	}
	net2.advance_clock(timestamp(10));
}
