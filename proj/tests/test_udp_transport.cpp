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

#include "kadrtc/protocol.hpp"
#include "kadrtc/udp_transport.hpp"

#include "doctest.h"

#include <future>

using namespace kadrtc;
using namespace std::chrono_literals;

TEST_CASE("udp datagrams between two local sockets")
{
	event_loop loop;
	std::unique_ptr<transport> a, b;
	loop.call([&] {
		a = std::make_unique<udp_transport>(loop.context(), endpoint("127.0.0.1:0"));
		b = std::make_unique<udp_transport>(loop.context(), endpoint("127.0.0.1:0"));
	});
	CHECK(a->local_address().split()->second != 0);
	CHECK(a->local_address() != b->local_address());

	std::promise<std::pair<endpoint, std::string>> got;
	loop.call([&] {
		b->set_receive_handler([&](endpoint const& from, std::string_view d) {
			got.set_value({from, std::string(d)});
		});
	});
	// send() is callable from any thread
	a->send(b->local_address(), "hello over udp");
	auto fut = got.get_future();
	REQUIRE(fut.wait_for(5s) == std::future_status::ready);
	auto const [from, data] = fut.get();
	CHECK(data == "hello over udp");
	CHECK(from == a->local_address());

	loop.call([&] { a.reset(); b.reset(); });
}

TEST_CASE("udp timers")
{
	event_loop loop;
	std::unique_ptr<transport> t;
	loop.call([&] { t = std::make_unique<udp_transport>(loop.context(), endpoint("127.0.0.1:0")); });

	std::promise<timestamp> fired;
	bool cancelled_ran = false;
	timestamp start{};
	loop.call([&] {
		start = t->now();
		auto const gone = t->schedule(20ms, [&] { cancelled_ran = true; });
		t->schedule(50ms, [&] { fired.set_value(t->now()); });
		t->cancel(gone);
	});
	auto fut = fired.get_future();
	REQUIRE(fut.wait_for(5s) == std::future_status::ready);
	CHECK(fut.get() - start >= 50ms);
	CHECK_FALSE(cancelled_ran);
	loop.call([&] { t.reset(); });
}

TEST_CASE("udp errors")
{
	event_loop loop;
	loop.call([&] {
		CHECK_THROWS_AS(udp_transport(loop.context(), endpoint("nonsense")), transport_error);
		CHECK_THROWS_AS(udp_transport(loop.context(), endpoint("999.1.1.1:80")), transport_error);
		udp_transport t(loop.context(), endpoint("127.0.0.1:0"));
		CHECK_THROWS_AS(udp_transport(loop.context(), t.local_address()), transport_error);
		CHECK_THROWS_AS(t.send(t.local_address(), std::string(max_datagram_size + 1, 'x')), transport_error);
		// unreachable destinations fail silently
		CHECK_NOTHROW(t.send(endpoint("127.0.0.1:9"), "x"));
	});
}
