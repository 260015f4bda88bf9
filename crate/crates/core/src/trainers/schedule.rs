/// Learning rate `base · gamma^m`, `m` = number of milestones reached.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiStepLr {
    pub base: f64,
    pub milestones: Vec<usize>,
    pub gamma: f64,
}

impl MultiStepLr {
    pub fn factor(&self, epoch: usize) -> f64 {
        let passed = self.milestones.iter().filter(|&&m| epoch >= m).count();
        self.gamma.powi(passed as i32)
    }

    pub fn lr(&self, epoch: usize) -> f64 {
        self.base * self.factor(epoch)
    }

    pub fn is_drop(&self, epoch: usize) -> bool {
        self.milestones.contains(&epoch)
    }
}

/// Best-so-far tracking on a metric where larger is better.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<f64>,
    best_epoch: usize,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: None,
            best_epoch: 0,
            stale: 0,
        }
    }

    /// Records `metric` for `epoch`; true when it is a strict improvement.
    pub fn update(&mut self, epoch: usize, metric: f64) -> bool {
        if self.best.map_or(true, |b| metric > b) {
            self.best = Some(metric);
            self.best_epoch = epoch;
            self.stale = 0;
            true
        } else {
            self.stale += 1;
            false
        }
    }

    pub fn should_stop(&self) -> bool {
        self.stale >= self.patience
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}
