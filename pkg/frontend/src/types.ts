/** Wire types for the triage service JSON API. The UI renders these
 *  verbatim; it never computes metrics or manifest membership itself. */

export type VerdictStatus = "ok" | "mislabeled" | "ambiguous";

export type ErrorType =
  | "target_omission"
  | "spatial_confusion"
  | "missing_information"
  | "inherent_inaccuracy";

export const FLOOD_CHANNELS = [
  "non_flooded_building",
  "flooded_building",
  "non_flooded_road",
  "flooded_road",
] as const;

export type FloodChannel = (typeof FLOOD_CHANNELS)[number];

export interface Meta {
  dataset_id: string;
  total_tiles: number;
  metrics: string[];
  statuses: VerdictStatus[];
  error_types: ErrorType[];
}

export interface VerdictWire {
  seq: number;
  tile_id: string;
  status: VerdictStatus;
  error_type: ErrorType | null;
  note: string;
  annotator: string;
  timestamp: string;
}

export interface WorstMetric {
  name: string | null;
  value: number | null;
}

export interface TileSummary {
  tile_id: string;
  scores: Record<string, number | null>;
  worst_metric: WorstMetric;
  flagged: boolean;
  verdict: VerdictWire | null;
}

export interface TilePage {
  tiles: TileSummary[];
  total: number;
  page: number;
  page_size: number;
  sort: string;
  order: "asc" | "desc";
}

export interface TileDetail extends TileSummary {
  pre_image_url: string | null;
  post_image_url: string | null;
  reference_overlay_url: string | null;
  prediction_overlay_url: string | null;
  heuristic_tags: string[];
  verdict_history: VerdictWire[];
}

export interface ManifestCounts {
  total: number;
  included: number;
  excluded: number;
}

export interface Manifest {
  schema_version: number;
  dataset_id: string;
  included: { tile_id: string; split: string | null }[];
  excluded: { tile_id: string; split: string | null; reason: string }[];
  counts: ManifestCounts;
}

export interface VerdictRequest {
  status: VerdictStatus;
  error_type?: ErrorType;
  note?: string;
  annotator: string;
}

/** Everything a gallery card shows, straight from /api/tiles. */
export interface TileCardViewModel {
  tileId: string;
  thumbnailUrl: string;
  worstMetricName: string | null;
  worstMetricValue: number | null;
  flagged: boolean;
  verdict: VerdictWire | null;
}
