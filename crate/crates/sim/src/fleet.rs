//! The simulated device fleet.
//!
//! Devices wake on cycle boundaries, fetch the task listing snapshot taken
//! at the start of the batch, schedule, execute and report. The compute
//! phase of a batch is pure per device (own RNG, own store) and may run on
//! a worker pool; reports are applied sequentially in device order either
//! way, so single-threaded and parallel runs produce identical state.

use std::collections::{BTreeMap, HashSet};
use std::sync::{Arc, Mutex};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use fedtask_core::seed::derive_seed;
use fedtask_core::{
    AttachmentBlob, DeviceProfile, ErrorCode, FleetError, FleetHandle, TaskDescriptor,
    TaskRunReport, TelemetryRecord, VirtualTime,
};
use fedtask_device::executor::AlwaysAvailable;
use fedtask_device::{
    execute_task, schedule_cycle, DataStore, DeliveryStatus, Reporter, ResultTransport,
    TaskMaterials, TaskOutcome, TaskPlugin, TaskStatus, TransportError,
};
use fedtask_pfl::FlTrainingPlugin;
use fedtask_plugins::fe_asr::AsrEvalPlugin;
use fedtask_plugins::ft_news::NewsTuningPlugin;
use fedtask_server::{FedServer, IngestOutcome, IngressRequest, ServerConfig};

use crate::clock::{EventQueue, VirtualClock};
use crate::gen::generate_device;
use crate::scenario::ScenarioConfig;

pub const ECHO_PLUGIN_ID: &str = "echo";

/// Trivial plug-in for scheduling scenarios: returns a constant payload.
struct EchoPlugin;

impl TaskPlugin for EchoPlugin {
    fn plugin_id(&self) -> &str {
        ECHO_PLUGIN_ID
    }

    fn execute(
        &self,
        _materials: &TaskMaterials,
        _store: &fedtask_device::StoreView<'_>,
        ctx: &mut fedtask_device::ExecutionContext<'_>,
    ) -> Result<fedtask_core::envelope::Payload, fedtask_device::PluginError> {
        ctx.checkpoint(1.0, 1)?;
        let mut payload = fedtask_core::envelope::Payload::new();
        payload.insert("echo".into(), serde_json::json!(true));
        Ok(payload)
    }
}

/// In-process transport: submissions go straight into the server, with an
/// optional transport failure probability drawn from a shared stream.
pub struct SimTransport {
    server: Arc<FedServer>,
    failure_rate: f64,
    now: Mutex<VirtualTime>,
    rng: Mutex<ChaCha12Rng>,
}

impl SimTransport {
    fn new(server: Arc<FedServer>, failure_rate: f64, seed: [u8; 32]) -> Self {
        SimTransport {
            server,
            failure_rate,
            now: Mutex::new(VirtualTime::ZERO),
            rng: Mutex::new(ChaCha12Rng::from_seed(seed)),
        }
    }

    fn set_now(&self, now: VirtualTime) {
        *self.now.lock().unwrap() = now;
    }

    fn fails(&self) -> bool {
        self.failure_rate > 0.0 && self.rng.lock().unwrap().random_bool(self.failure_rate)
    }

    fn request_for<T: serde::Serialize>(object: &T) -> IngressRequest {
        let mut request =
            IngressRequest::from_body(fedtask_core::wire::to_canonical_json(object).unwrap_or_default());
        // Transport metadata the server must strip.
        request.headers.insert("user-agent".into(), "fedtask-sim/0.1".into());
        request.headers.insert("x-forwarded-for".into(), "192.0.2.1".into());
        request
    }
}

impl ResultTransport for SimTransport {
    fn submit_result(
        &self,
        envelope: &fedtask_core::ResultEnvelope,
    ) -> Result<DeliveryStatus, TransportError> {
        if self.fails() {
            return Err(TransportError::Unavailable("simulated network failure".into()));
        }
        let now = *self.now.lock().unwrap();
        match self.server.ingest_result(Self::request_for(envelope), now) {
            IngestOutcome::Stored => Ok(DeliveryStatus::Stored),
            IngestOutcome::IgnoredRetired => Ok(DeliveryStatus::IgnoredRetired),
            IngestOutcome::Throttled => Ok(DeliveryStatus::Throttled),
            IngestOutcome::Rejected(_) => Ok(DeliveryStatus::Rejected),
        }
    }

    fn submit_telemetry(&self, telemetry: &TelemetryRecord) -> Result<DeliveryStatus, TransportError> {
        if self.fails() {
            return Err(TransportError::Unavailable("simulated network failure".into()));
        }
        let now = *self.now.lock().unwrap();
        match self.server.ingest_telemetry(Self::request_for(telemetry), now) {
            IngestOutcome::Stored => Ok(DeliveryStatus::Stored),
            IngestOutcome::Rejected(_) => Ok(DeliveryStatus::Rejected),
            _ => Ok(DeliveryStatus::Rejected),
        }
    }
}

/// One simulated device: core runtime pieces plus its random stream and
/// the set of tasks it has completed.
pub struct SimDevice {
    pub index: usize,
    pub profile: DeviceProfile,
    pub store: DataStore,
    pub reporter: Reporter,
    pub completed: HashSet<String>,
    rng: ChaCha12Rng,
}

/// Result of one device's compute phase, applied sequentially.
struct PendingReport {
    device_index: usize,
    available: bool,
    executions: Vec<(TaskDescriptor, TaskOutcome, TelemetryRecord)>,
}

#[derive(Debug, Clone, Copy, Default, serde::Serialize)]
pub struct CycleStats {
    pub time_millis: u64,
    pub wakes: u64,
    pub available: u64,
    pub selections: u64,
    pub completed: u64,
    pub aborted: u64,
    pub failed: u64,
    pub results_stored: u64,
    pub results_ignored_retired: u64,
    pub results_throttled: u64,
    pub results_rejected: u64,
    pub results_dropped: u64,
}

enum Event {
    DeviceWake(usize),
    ServerSweep,
}

/// The fleet plus server, clock and event queue.
pub struct SimFleet {
    pub cfg: ScenarioConfig,
    pub devices: Vec<SimDevice>,
    pub server: Arc<FedServer>,
    pub transport: Arc<SimTransport>,
    pub clock: VirtualClock,
    pub cycles: Vec<CycleStats>,
    /// Device indices whose result was stored, per task, in apply order.
    pub task_participants: BTreeMap<String, Vec<usize>>,
    plugins: BTreeMap<String, Arc<dyn TaskPlugin>>,
    threads: usize,
}

impl SimFleet {
    pub fn new(cfg: ScenarioConfig, persist_dir: Option<std::path::PathBuf>) -> Result<Self, FleetError> {
        cfg.validate().map_err(|e| FleetError::Other(e.to_string()))?;
        let server_config = ServerConfig {
            retention_days: cfg.server.retention_days,
            throttle_rate_per_sec: cfg.server.throttle_rate_per_sec,
            throttle_burst: cfg.server.throttle_burst,
            page_size: cfg.server.page_size,
        };
        let server = match persist_dir {
            Some(dir) => Arc::new(
                FedServer::with_persistence(server_config, dir)
                    .map_err(|e| FleetError::Other(e.to_string()))?,
            ),
            None => Arc::new(FedServer::new(server_config)),
        };
        let transport = Arc::new(SimTransport::new(
            Arc::clone(&server),
            cfg.transport_failure_rate,
            derive_seed(cfg.master_seed, "transport", 0),
        ));

        let devices = (0..cfg.fleet_size)
            .map(|index| {
                let (profile, store) = generate_device(&cfg, index);
                SimDevice {
                    index,
                    profile,
                    store,
                    reporter: Reporter::new(),
                    completed: HashSet::new(),
                    rng: ChaCha12Rng::from_seed(derive_seed(cfg.master_seed, "device-rng", index as u64)),
                }
            })
            .collect();

        let mut plugins: BTreeMap<String, Arc<dyn TaskPlugin>> = BTreeMap::new();
        plugins.insert(ECHO_PLUGIN_ID.into(), Arc::new(EchoPlugin));
        plugins.insert(
            fedtask_plugins::ft_news::NEWS_PLUGIN_ID.into(),
            Arc::new(NewsTuningPlugin::default()),
        );
        plugins.insert(fedtask_plugins::fe_asr::ASR_PLUGIN_ID.into(), Arc::new(AsrEvalPlugin));
        plugins.insert(fedtask_pfl::FL_PLUGIN_ID.into(), Arc::new(FlTrainingPlugin));

        Ok(SimFleet {
            cfg,
            devices,
            server,
            transport,
            clock: VirtualClock::new(),
            cycles: Vec::new(),
            task_participants: BTreeMap::new(),
            plugins,
            threads: 1,
        })
    }

    pub fn set_threads(&mut self, threads: usize) {
        self.threads = threads.max(1);
    }

    fn wake_interval_millis(&self) -> u64 {
        self.cfg.availability.wake_interval_hours * fedtask_core::time::MILLIS_PER_HOUR
    }

    /// Runs one fleet-wide wake batch at `now` through the event queue.
    fn run_cycle(&mut self, now: VirtualTime) {
        self.clock.advance_to(now);
        self.transport.set_now(now);

        let mut queue = EventQueue::new();
        for index in 0..self.devices.len() {
            queue.push(now, Event::DeviceWake(index));
        }
        queue.push(now, Event::ServerSweep);

        // Listing snapshot per plug-in for this batch; devices that report
        // after the task retires mid-batch become stragglers.
        let mut listings: BTreeMap<String, Vec<TaskDescriptor>> = BTreeMap::new();
        for plugin_id in self.plugins.keys() {
            listings.insert(plugin_id.clone(), self.server.list_tasks(plugin_id, now));
        }
        let listings = Arc::new(listings);

        let mut wake_batch = Vec::new();
        let mut stats = CycleStats { time_millis: now.millis(), ..CycleStats::default() };
        while let Some((_, event)) = queue.pop() {
            match event {
                Event::DeviceWake(index) => wake_batch.push(index),
                Event::ServerSweep => {
                    // Device wakes were queued first; flush them, then sweep.
                    self.flush_wakes(&wake_batch, now, &listings, &mut stats);
                    wake_batch.clear();
                    self.server.sweep_retirement(now);
                }
            }
        }
        self.flush_wakes(&wake_batch, now, &listings, &mut stats);
        self.cycles.push(stats);
    }

    fn flush_wakes(
        &mut self,
        batch: &[usize],
        now: VirtualTime,
        listings: &Arc<BTreeMap<String, Vec<TaskDescriptor>>>,
        stats: &mut CycleStats,
    ) {
        if batch.is_empty() {
            return;
        }
        let duty_cycle = self.cfg.availability.duty_cycle;
        let deadline = self.cfg.execution_deadline_millis;
        let server = Arc::clone(&self.server);
        let plugins = &self.plugins;

        let compute = |device: &mut SimDevice| -> PendingReport {
            compute_device_cycle(device, now, duty_cycle, deadline, listings, &server, plugins)
        };

        let mut reports: Vec<PendingReport> = if self.threads > 1 {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(self.threads)
                .build()
                .expect("worker pool");
            let mut devices: Vec<&mut SimDevice> = self.devices.iter_mut().collect();
            pool.install(|| devices.par_iter_mut().map(|device| compute(device)).collect())
        } else {
            self.devices.iter_mut().map(compute).collect()
        };
        reports.sort_by_key(|r| r.device_index);

        for report in reports {
            stats.wakes += 1;
            if report.available {
                stats.available += 1;
            }
            let device = &mut self.devices[report.device_index];
            for (descriptor, outcome, telemetry) in report.executions {
                stats.selections += 1;
                match outcome.status {
                    TaskStatus::Completed => stats.completed += 1,
                    TaskStatus::Failed => stats.failed += 1,
                    _ => stats.aborted += 1,
                }
                let receipt = device.reporter.report(
                    self.transport.as_ref(),
                    &outcome,
                    &descriptor.task_id,
                    &descriptor.plugin_id,
                    telemetry,
                    now,
                );
                if outcome.status == TaskStatus::Completed {
                    device.completed.insert(descriptor.task_id.clone());
                }
                match receipt.result_status {
                    Some(DeliveryStatus::Stored) => {
                        stats.results_stored += 1;
                        self.task_participants
                            .entry(descriptor.task_id.clone())
                            .or_default()
                            .push(report.device_index);
                    }
                    Some(DeliveryStatus::IgnoredRetired) => stats.results_ignored_retired += 1,
                    Some(DeliveryStatus::Throttled) => stats.results_throttled += 1,
                    Some(DeliveryStatus::Rejected) => stats.results_rejected += 1,
                    None => {}
                }
                if receipt.result_dropped {
                    stats.results_dropped += 1;
                }
            }
        }
    }

    /// Advances whole cycles until `until`, or earlier when `done` reports
    /// completion after a cycle.
    pub fn run_until<F: FnMut(&SimFleet) -> bool>(&mut self, until: VirtualTime, mut done: F) {
        let interval = self.wake_interval_millis();
        let mut next = self.clock.now().plus_millis(interval);
        while next <= until {
            self.run_cycle(next);
            if done(self) {
                return;
            }
            next = next.plus_millis(interval);
        }
    }

    /// Fleet-wide sum of device report counters.
    pub fn device_counters(&self) -> fedtask_device::ReportCounters {
        let mut total = fedtask_device::ReportCounters::default();
        for device in &self.devices {
            let c = device.reporter.counters;
            total.results_attempted += c.results_attempted;
            total.results_delivered += c.results_delivered;
            total.results_dropped += c.results_dropped;
            total.telemetry_attempted += c.telemetry_attempted;
            total.telemetry_delivered += c.telemetry_delivered;
            total.telemetry_dropped += c.telemetry_dropped;
        }
        total
    }
}

/// Pure per-device cycle: availability draw, scheduling, execution.
fn compute_device_cycle(
    device: &mut SimDevice,
    now: VirtualTime,
    duty_cycle: f64,
    deadline_millis: u64,
    listings: &BTreeMap<String, Vec<TaskDescriptor>>,
    server: &FedServer,
    plugins: &BTreeMap<String, Arc<dyn TaskPlugin>>,
) -> PendingReport {
    let mut report =
        PendingReport { device_index: device.index, available: false, executions: Vec::new() };

    // Availability model: the device is on power, idle and unmetered for
    // this cycle with probability duty_cycle.
    let available = duty_cycle >= 1.0 || device.rng.random_bool(duty_cycle);
    device.profile.power_connected = available;
    device.profile.idle = available;
    device.profile.unmetered_network = available;
    report.available = available && device.profile.participates();
    if !report.available || !device.store.unlocked() {
        return report;
    }

    // Completed tasks do not re-enter sampling; aborted and failed ones do.
    let mut descriptors: BTreeMap<String, Vec<TaskDescriptor>> = BTreeMap::new();
    for (plugin_id, listing) in listings.iter() {
        let remaining: Vec<TaskDescriptor> = listing
            .iter()
            .filter(|descriptor| !device.completed.contains(&descriptor.task_id))
            .cloned()
            .collect();
        if !remaining.is_empty() {
            descriptors.insert(plugin_id.clone(), remaining);
        }
    }

    let store_keys = device.store.keys();
    let selections =
        match schedule_cycle(&device.profile, &descriptors, &store_keys, now, &mut device.rng) {
            Ok(selections) => selections,
            Err(_) => return report,
        };

    for (plugin_id, descriptor) in selections {
        let Some(plugin) = plugins.get(&plugin_id) else {
            continue;
        };
        let attachments: Vec<AttachmentBlob> = descriptor
            .attachment_refs
            .iter()
            .filter_map(|reference| server.fetch_blob(reference).map(AttachmentBlob::new))
            .collect();
        if attachments.len() != descriptor.attachment_refs.len() {
            continue;
        }
        let materials = TaskMaterials::new(descriptor.clone(), attachments);
        let Ok(view) = device.store.view() else {
            continue;
        };
        let mut exec_seed = [0u8; 32];
        device.rng.fill_bytes(&mut exec_seed);
        let outcome =
            execute_task(plugin.as_ref(), &materials, &view, &AlwaysAvailable, deadline_millis, exec_seed);

        let error_code = match outcome.status {
            TaskStatus::Completed => None,
            TaskStatus::AbortedPower => Some(ErrorCode::AbortedPower),
            TaskStatus::AbortedTimeout => Some(ErrorCode::AbortedTimeout),
            TaskStatus::Failed => {
                if outcome.failure.as_deref().is_some_and(|f| f.contains("no usable on-device data")) {
                    Some(ErrorCode::EmptyDataset)
                } else {
                    Some(ErrorCode::PluginFailed)
                }
            }
        };
        let telemetry = TelemetryRecord {
            plugin_id: plugin_id.clone(),
            task_exec_millis: outcome.exec_millis,
            error_code,
            data_record_count: device.store.counts_by_key(),
        };
        report.executions.push((descriptor, outcome, telemetry));
    }
    report
}

impl FleetHandle for SimFleet {
    fn now(&self) -> VirtualTime {
        self.clock.now()
    }

    fn run_task(
        &mut self,
        descriptor: TaskDescriptor,
        attachments: Vec<AttachmentBlob>,
    ) -> Result<TaskRunReport, FleetError> {
        let task_id = descriptor.task_id.clone();
        let window_end = descriptor.active_window.end;
        self.server
            .publish_task(descriptor, attachments)
            .map_err(|e| FleetError::Publish(e.to_string()))?;

        self.run_until(window_end.plus_hours(1), |fleet| {
            matches!(
                fleet.server.task_status(&task_id),
                Ok((fedtask_server::TaskStatus::Retired, _))
            )
        });

        let envelopes =
            self.server.fetch_all_results(&task_id).map_err(|e| FleetError::Other(e.to_string()))?;
        Ok(TaskRunReport { envelopes })
    }
}
