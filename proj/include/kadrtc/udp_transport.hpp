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

#include "kadrtc/transport.hpp"

#include <boost/asio/executor_work_guard.hpp>
#include <boost/asio/io_context.hpp>

#include <functional>
#include <future>
#include <memory>
#include <thread>
#include <type_traits>

namespace kadrtc {

// Datagram transport over a real UDP socket. All callbacks run on the
// io_context; send() may be called from any thread.
class udp_transport final : public transport
{
public:
	// `listen` is "host:port"; port 0 picks an ephemeral port. Throws
	// transport_error if the socket cannot be bound.
	udp_transport(boost::asio::io_context& io, endpoint const& listen);
	~udp_transport() override;

	endpoint const& local_address() const override;
	void send(endpoint const& to, std::string_view datagram) override;
	void set_receive_handler(receive_handler handler) override;
	timestamp now() const override;
	timer_id schedule(milliseconds delay, std::function<void()> fn) override;
	void cancel(timer_id id) override;

private:
	struct state;
	std::shared_ptr<state> m_state;
};

// One io_context driven by a dedicated thread: the serialized event loop
// a real node runs on. post() and call() may be used from any thread.
class event_loop
{
public:
	event_loop();
	~event_loop();

	boost::asio::io_context& context() { return m_io; }

	void post(std::function<void()> fn);

	// Runs `fn` on the loop and waits for its result.
	template <class F>
	auto call(F fn) -> std::invoke_result_t<F>
	{
		using R = std::invoke_result_t<F>;
		std::packaged_task<R()> task(std::move(fn));
		auto result = task.get_future();
		post([&task] { task(); });
		return result.get();
	}

	void stop();

private:
	boost::asio::io_context m_io;
	boost::asio::executor_work_guard<boost::asio::io_context::executor_type> m_work;
	std::thread m_thread;
};

} // namespace kadrtc
