mod common;

use std::io::{Read, Write};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use common::{constant_sim, run, virtual_host};
use daq_core::acquisition::{
    poll_once, run_session, AcquisitionConfig, Collector, EndReason, GapReport, PollError, Poller,
    SampleRecord, SessionControl, Sink, SinkError,
};
use daq_core::codec::{encode_frame, RawFrame};
use daq_core::conversion::{LinearMap, QualityFlag};
use daq_core::sim::{run_device, FaultConfig, SimConfig};
use daq_core::transport::duplex_pipe;

#[test]
fn lossless_ten_thousand_polls() {
    let (s, c, dev) = run(&constant_sim(25.0), &virtual_host(), 10_000);
    assert_eq!((s.polls, s.records, s.timeouts, s.decode_errors, s.gaps), (10_000, 10_000, 0, 0, 0));
    assert!(s.is_conserved());
    assert_eq!(s.end, Some(EndReason::Completed));
    assert_eq!(dev.stats().frames_generated, 10_000);
    for (k, r) in c.records.iter().enumerate() {
        assert_eq!(r.seq, k as u8);
    }
    assert!(c.records.windows(2).all(|w| w[0].host_time < w[1].host_time));
}

#[test]
fn constant_25_celsius_is_within_half_an_lsb() {
    let (_, c, _) = run(&constant_sim(25.0), &virtual_host(), 3);
    let half = LinearMap::temperature().lsb_in_units() / 2.0;
    assert!((half - 0.0244).abs() < 1e-4);
    for r in &c.records {
        let v = r.value(0).unwrap();
        assert!((v.value - 25.0).abs() <= half, "{}", v.value);
        assert_eq!(v.flag, QualityFlag::Ok);
        assert_eq!(r.counts[0].get(), 512);
    }
}

fn drop_every(n: u64) -> SimConfig {
    SimConfig {
        faults: FaultConfig {
            drop_every: Some(n),
            ..FaultConfig::default()
        },
        ..constant_sim(20.0)
    }
}

#[test]
fn every_hundredth_response_dropped() {
    let (s, c, dev) = run(&drop_every(100), &virtual_host(), 10_000);
    assert_eq!(s.timeouts, 100);
    assert_eq!(s.records, 9_900);
    assert!(s.is_conserved());
    assert!(c.gaps.iter().all(|g| g.missed_count == 1));
    // The drop on the final poll has no later frame to reveal it.
    assert_eq!(s.missed, 99);
    assert_eq!(s.missed + 1, dev.stats().frames_generated - s.records);

    let (s, _, dev) = run(&drop_every(100), &virtual_host(), 10_001);
    assert_eq!(s.timeouts, 100);
    assert_eq!(s.missed, 100);
    assert_eq!(s.missed, dev.stats().frames_generated - s.records);
}

#[test]
fn corrupted_responses_are_isolated() {
    let sim = SimConfig {
        faults: FaultConfig {
            corrupt_every: Some(3),
            ..FaultConfig::default()
        },
        ..constant_sim(20.0)
    };
    let (s, c, dev) = run(&sim, &virtual_host(), 31);
    assert_eq!((s.records, s.decode_errors, s.timeouts), (21, 10, 0));
    assert!(s.is_conserved());
    assert_eq!(s.missed, 10);
    assert_eq!(s.missed, dev.stats().frames_generated - s.records);
    assert_eq!(c.gaps.len(), 10);
}

#[test]
fn corrupted_frame_then_valid_frame() {
    let (host, mut dev) = duplex_pipe();
    let good = encode_frame(&RawFrame::from_raw(7, &[1, 2, 3, 4, 5, 6, 7, 8]).unwrap());
    let mut bad = good;
    bad[10] = b'x';
    let script = thread::spawn(move || {
        let mut poll = [0u8; 3];
        for reply in [bad, good] {
            dev.read_exact(&mut poll).unwrap();
            dev.write_all(&reply).unwrap();
        }
    });
    let cfg = virtual_host();
    let mut p = Poller::new(host, &cfg);
    assert!(matches!(p.poll_frame(), Err(PollError::Decode(_))));
    assert_eq!(p.poll_frame().unwrap().seq, 7);
    script.join().unwrap();
}

#[test]
fn silent_device_times_out() {
    let cfg = AcquisitionConfig {
        response_timeout_ms: 50,
        ..AcquisitionConfig::default()
    };
    // Peer never reads: the full wall-clock timeout elapses.
    let (mut host, _dev) = duplex_pipe();
    let start = Instant::now();
    assert!(matches!(poll_once(&mut host, &cfg), Err(PollError::Timeout(_))));
    assert!(start.elapsed() >= Duration::from_millis(50));

    // Same over TCP.
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let mut conn = std::net::TcpStream::connect(listener.local_addr().unwrap()).unwrap();
    let _server = listener.accept().unwrap();
    assert!(matches!(poll_once(&mut conn, &cfg), Err(PollError::Timeout(_))));
}

struct StopAfter {
    n: usize,
    seen: usize,
    control: Arc<SessionControl>,
}

impl Sink for StopAfter {
    fn record(&mut self, _: &SampleRecord) -> Result<(), SinkError> {
        self.seen += 1;
        if self.seen == self.n {
            self.control.stop();
        }
        Ok(())
    }
}

#[test]
fn stop_after_five_records() {
    let (host, mut dev) = duplex_pipe();
    let sim = constant_sim(20.0);
    let d = thread::spawn(move || run_device(&sim, &mut dev).unwrap());
    let cfg = virtual_host();
    let control = SessionControl::new(cfg.enabled_channels.clone());
    let mut sink = StopAfter {
        n: 5,
        seen: 0,
        control: Arc::clone(&control),
    };
    let s = run_session(host, &cfg, &mut sink, &control, None).unwrap();
    assert_eq!(s.records, 5);
    assert_eq!(s.end, Some(EndReason::Stopped));
    d.join().unwrap();
}

#[test]
fn stop_interrupts_a_paced_session_promptly() {
    let (host, mut dev) = duplex_pipe();
    let sim = constant_sim(20.0);
    let d = thread::spawn(move || run_device(&sim, &mut dev).unwrap());
    let cfg = AcquisitionConfig {
        poll_period_ms: 60_000,
        ..AcquisitionConfig::default()
    };
    let control = SessionControl::new(cfg.enabled_channels.clone());
    let c2 = Arc::clone(&control);
    let stopper = thread::spawn(move || {
        thread::sleep(Duration::from_millis(100));
        c2.stop();
    });
    let start = Instant::now();
    let s = run_session(host, &cfg, &mut Collector::new(), &control, None).unwrap();
    assert!(start.elapsed() < Duration::from_secs(10));
    assert_eq!(s.records, 1);
    assert_eq!(s.end, Some(EndReason::Stopped));
    stopper.join().unwrap();
    d.join().unwrap();
}

#[test]
fn system_clock_paces_polls() {
    let cfg = AcquisitionConfig {
        poll_period_ms: 25,
        response_timeout_ms: 20,
        ..AcquisitionConfig::default()
    };
    let start = Instant::now();
    let (s, c, _) = run(&constant_sim(20.0), &cfg, 5);
    assert!(start.elapsed() >= Duration::from_millis(100));
    assert_eq!(s.records, 5);
    assert!(c.records.windows(2).all(|w| w[0].host_time <= w[1].host_time));
}

#[test]
fn device_disconnect_ends_the_session() {
    let (host, mut dev) = duplex_pipe();
    let sim = constant_sim(20.0);
    let d = thread::spawn(move || {
        let mut device = daq_core::sim::Device::new(&sim).unwrap();
        let mut poll = [0u8; 3];
        for _ in 0..3 {
            dev.read_exact(&mut poll).unwrap();
            dev.write_all(&device.respond().unwrap()).unwrap();
        }
    });
    let cfg = virtual_host();
    let control = SessionControl::new(cfg.enabled_channels.clone());
    let s = run_session(host, &cfg, &mut Collector::new(), &control, Some(100)).unwrap();
    d.join().unwrap();
    assert_eq!(s.records, 3);
    assert!(s.is_conserved());
    assert!(matches!(s.end, Some(EndReason::TransportLost(_))));
}

#[derive(Default)]
struct Events(Vec<String>, Option<Arc<SessionControl>>);

impl Sink for Events {
    fn record(&mut self, r: &SampleRecord) -> Result<(), SinkError> {
        self.0.push(format!("r{}:{:?}", r.seq, r.enabled_channels));
        if r.seq == 2 {
            if let Some(c) = &self.1 {
                c.set_enabled_channels(vec![1]).unwrap();
            }
        }
        Ok(())
    }
    fn gap(&mut self, g: &GapReport) -> Result<(), SinkError> {
        self.0.push(format!("g{}", g.missed_count));
        Ok(())
    }
}

#[test]
fn gaps_precede_records_and_selection_changes_apply_next_record() {
    let (host, mut dev) = duplex_pipe();
    let sim = drop_every(4);
    let d = thread::spawn(move || run_device(&sim, &mut dev).unwrap());
    let cfg = AcquisitionConfig {
        enabled_channels: vec![0],
        ..virtual_host()
    };
    let control = SessionControl::new(cfg.enabled_channels.clone());
    let mut ev = Events(Vec::new(), Some(Arc::clone(&control)));
    run_session(host, &cfg, &mut ev, &control, Some(6)).unwrap();
    d.join().unwrap();
    assert_eq!(ev.0, ["r0:[0]", "r1:[0]", "r2:[0]", "g1", "r4:[1]", "r5:[1]"]);
    assert!(control.set_enabled_channels(vec![9]).is_err());
}

#[test]
fn invalid_config_is_rejected_before_polling() {
    let cfg = AcquisitionConfig {
        poll_period_ms: 0,
        enabled_channels: vec![8],
        ..AcquisitionConfig::default()
    };
    let (host, _dev) = duplex_pipe();
    let control = SessionControl::new(vec![]);
    let errs = run_session(host, &cfg, &mut Collector::new(), &control, Some(1)).unwrap_err();
    assert!(errs.0.len() >= 2);
}
