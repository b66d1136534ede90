/** Wire types for the /v1 scoring service. */

export interface TherapyAction {
  chemo: string;
  chemo_dose: number;
  chemo_cycles: number;
  radio: string;
  radio_dose: number;
  brachy: boolean;
  immuno: string;
  add: string;
  interval_days: number;
}

export interface ClinicalProfile {
  age: number;
  sex: string;
  biomarkers: Record<string, number>;
  treatment_history: string[];
}

export interface PatientRecord {
  patient_id: string;
  profile: ClinicalProfile;
  visits: { t: number; tokens: number[][] }[];
  actions: TherapyAction[];
  label: { time_days: number; event: number; one_year: number; one_year_valid: boolean };
}

export interface GrammarInfo {
  chemo_options: string[];
  radio_options: string[];
  immuno_options: string[];
  add_options: string[];
  dose_levels: number[];
  cycles_range: [number, number];
  interval_range: [number, number];
  schedule_grid: number[];
  biomarkers: string[];
  sex_options: string[];
  constraints: {
    forbidden_pairs: string[][];
    dose_caps: Record<string, number>;
    history_rules: string[];
  };
  latent_tokens: number;
  latent_width: number;
}

export interface SurvivalOutput {
  p_1y: number;
  risk: number;
}

export interface ScoredCandidate extends SurvivalOutput {
  action: TherapyAction;
}

export interface FeedbackEntry extends SurvivalOutput {
  action: TherapyAction;
  iteration: number;
}

export interface PlanResponse {
  best_action: TherapyAction;
  best_risk: number;
  best_p_1y: number;
  iterations_run: number;
  candidate_count: number;
  best_risk_trace: number[];
  feedback: FeedbackEntry[];
}

export interface TrajectoryStep {
  t_days: number;
  p_1y: number;
  risk: number;
  action: TherapyAction;
  latent: number[][];
}

export interface RolloutResponse {
  trajectory: TrajectoryStep[];
}
