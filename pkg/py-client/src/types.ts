// Generated from the JSON schema files in src/kgrenv/schemas.
// Regenerate with: npm run generate. Do not edit by hand.

export const TOOL_NAMES = [
  "query_coverage_feedback",
  "query_entity_disambiguation",
  "query_extraction_density",
  "query_iterative_feedback",
  "query_kg_storage",
  "query_quality_metrics",
] as const;

export type ToolName = (typeof TOOL_NAMES)[number];

export interface ExtractedKg {
  entities: Record<string, string[]>;
  relations: Record<string, Array<{
    subject: string;
    object: string;
  }>>;
}

export interface KgSchema {
  entity_schema: string[];
  relation_schema: string[];
}

export interface QueryCoverageFeedbackRequest {
  text: string;
  schema: KgSchema;
  extracted_kg: ExtractedKg;
  priority_types?: string[];
}

export interface QueryCoverageFeedbackResponse {
  schema_info: {
    entity_types: string[];
    relation_types: string[];
    total_types: number;
    schema_complexity: string;
  };
  type_coverage: {
    entity_coverage: {
      covered_types: string[];
      total_types: number;
      coverage_ratio: number;
    };
    relation_coverage: {
      covered_types: string[];
      total_types: number;
      coverage_ratio: number;
    };
    overall_coverage: number;
  };
  missing_types: {
    missing_entity_types: string[];
    missing_relation_types: string[];
  };
  priority_analysis: {
    has_priority: boolean;
    priority_types: string[];
    covered_priority: string[];
    missing_priority: string[];
    priority_coverage_ratio: number;
  };
  coverage_score: number;
  recommendations: string[];
}

export interface QueryEntityDisambiguationRequest {
  extracted_kg: ExtractedKg;
  disambiguation_strategy?: string;
  similarity_threshold?: number;
  context?: string;
}

export interface QueryEntityDisambiguationResponse {
  disambiguation_results: Array<{
    original_entity: {
      type: string;
      name: string;
    };
    candidates: Array<{
      candidate: {
        name: string;
        properties: Record<string, unknown>;
      };
      confidence: number;
    }>;
    best_match: {
      candidate: {
        name: string;
        properties: Record<string, unknown>;
      };
      confidence: number;
    } | null;
    is_disambiguated: boolean;
    confidence: number;
  }>;
  relationships_results: Array<{
    entity: Record<string, unknown>;
    relationships: Array<{
      type: string;
      target: Record<string, unknown>;
      properties: Record<string, unknown>;
    }>;
  }>;
  quality_score: number;
  disambiguation_strategy: string;
  similarity_threshold: number;
  standardization_suggestions: string[];
  summary: {
    total_entities: number;
    disambiguated_entities: number;
    disambiguation_rate: number;
    average_confidence: number;
    unmatched_entities: number;
  };
}

export interface QueryExtractionDensityRequest {
  text: string;
  schema: KgSchema;
  extracted_kg: ExtractedKg;
  domain?: string;
}

export interface QueryExtractionDensityResponse {
  text_stats: {
    token_count: number;
    sentence_count: number;
    word_count: number;
    character_count: number;
  };
  current_density: {
    total_entities: number;
    total_relations: number;
    total_kg_elements: number;
    entity_type_count: number;
    relation_type_count: number;
    entities_per_1k_tokens: number;
    relations_per_1k_tokens: number;
    kg_density_per_1k_tokens: number;
    entity_relation_ratio: number;
  };
  expected_density: {
    expected_entities_per_1k: number;
    expected_relations_per_1k: number;
    min_entities_per_1k: number;
    min_relations_per_1k: number;
    max_entities_per_1k: number;
    max_relations_per_1k: number;
    schema_complexity: number;
    entity_complexity_factor: number;
    relation_complexity_factor: number;
  };
  complexity_features: {
    entity_mentions: number;
    avg_sentence_length: number;
    technical_terms: number;
    schema_entity_types: number;
    schema_relation_types: number;
    complexity_score: number;
  };
  density_assessment: {
    entity_density_ratio: number;
    relation_density_ratio: number;
    overall_density_score: number;
    assessment_level: "insufficient" | "moderate" | "adequate" | "excellent" | "over_extraction";
    is_adequate: boolean;
    meets_minimum_thresholds: boolean;
    potential_over_extraction: boolean;
    balance_score: number;
  };
  needs_more_extraction: boolean;
  recommendations: string[];
}

export interface QueryIterativeFeedbackRequest {
  extraction_history: ExtractedKg[];
  extracted_kg: ExtractedKg;
  text: string;
  schema: KgSchema;
  feedback_history?: Array<Record<string, unknown>>;
  max_iterations?: number;
}

export interface QueryIterativeFeedbackResponse {
  progress_analysis: {
    trend: "improving" | "stagnant" | "declining";
    recent_improvement: number;
    overall_quality_change: number;
    extraction_volume_change: number;
    convergence_status: string;
  };
  problem_patterns: {
    recurring_issues: string[];
    pattern_types: string[];
    suggested_solutions: string[];
    issue_frequency: Record<string, unknown>;
    severity_levels: Record<string, unknown>;
  };
  optimization_strategy: {
    strategies: Array<{
      type: string;
      description: string;
      actions: string[];
    }>;
    priority_strategy: {
      type: string;
      description: string;
      actions: string[];
    };
    iteration_focus: "coverage_expansion" | "quality_improvement" | "refinement";
  };
  iteration_effectiveness: {
    effectiveness: "high" | "medium" | "low" | "stagnant" | "insufficient_data";
    average_improvement: number;
    improvement_trend: number[];
    total_iterations: number;
  };
  should_continue_iteration: boolean;
  current_iteration: number;
  max_iterations: number;
  next_steps: string[];
}

export interface QueryKgStorageRequest {
  extracted_kg: ExtractedKg;
}

export interface QueryKgStorageResponse {
  storage_status: {
    overall_success: boolean;
    entities_storage: {
      code: 0 | -1;
      message: string;
      stored_count: number;
      skipped_count: number;
      failed_count: number;
    };
    relations_storage: {
      code: 0 | -1;
      message: string;
      stored_count: number;
      skipped_count: number;
      failed_count: number;
    };
  };
  storage_details: {
    total_entities: number;
    total_relations: number;
    entity_types_processed: string[];
    relation_types_processed: string[];
    duplicates_detected: {
      entity_duplicates: number;
      relation_duplicates: number;
    };
    processing_time: {
      entities_time: number;
      relations_time: number;
      total_time: number;
    };
  };
  final_kg: {
    entities: Record<string, string[]>;
    relations: Record<string, Array<{
      subject: string;
      object: string;
    }>>;
  };
  storage_summary: {
    operation_timestamp: string;
    database_config: {
      host: string;
      database: string;
    };
    performance_metrics: {
      entities_per_second: number;
      relations_per_second: number;
      overall_throughput: number;
    };
  };
  warnings: string[];
  recommendations: string[];
}

export interface QueryQualityMetricsRequest {
  extracted_kg: ExtractedKg;
  schema: KgSchema;
  text: string;
  evaluation_aspects?: string[];
}

export interface QueryQualityMetricsResponse {
  evaluation_aspects: string[];
  evaluation_results: {
    consistency: {
      score: number;
      issues: string[];
      details: {
        entity_naming_consistency: number;
        relation_consistency: number;
        duplicate_entities: number;
        conflicting_relations: number;
      };
    };
    completeness: {
      score: number;
      issues: string[];
      details: {
        missing_entity_types: string[];
        missing_relation_types: string[];
        entity_type_coverage: number;
        relation_type_coverage: number;
        extraction_density: number;
      };
    };
    accuracy: {
      score: number;
      issues: string[];
      details: {
        entities_not_in_text: number;
        relations_not_in_text: number;
        boundary_errors: number;
        type_misclassifications: number;
      };
    };
    schema_compliance: {
      score: number;
      issues: string[];
      details: {
        valid_entity_types: number;
        invalid_entity_types: number;
        valid_relation_types: number;
        invalid_relation_types: number;
        structure_violations: number;
      };
    };
  };
  overall_score: number;
  quality_level: "excellent" | "good" | "fair" | "poor" | "very_poor";
  improvement_suggestions: string[];
  detailed_metrics: {
    consistency: {
      score: number;
      details: Record<string, unknown>;
      issues: string[];
    };
    completeness: {
      score: number;
      details: Record<string, unknown>;
      issues: string[];
    };
    accuracy: {
      score: number;
      details: Record<string, unknown>;
      issues: string[];
    };
    schema_compliance: {
      score: number;
      details: Record<string, unknown>;
      issues: string[];
    };
  };
}

export interface ToolRequestMap {
  query_coverage_feedback: QueryCoverageFeedbackRequest;
  query_entity_disambiguation: QueryEntityDisambiguationRequest;
  query_extraction_density: QueryExtractionDensityRequest;
  query_iterative_feedback: QueryIterativeFeedbackRequest;
  query_kg_storage: QueryKgStorageRequest;
  query_quality_metrics: QueryQualityMetricsRequest;
}

export interface ToolResponseMap {
  query_coverage_feedback: QueryCoverageFeedbackResponse;
  query_entity_disambiguation: QueryEntityDisambiguationResponse;
  query_extraction_density: QueryExtractionDensityResponse;
  query_iterative_feedback: QueryIterativeFeedbackResponse;
  query_kg_storage: QueryKgStorageResponse;
  query_quality_metrics: QueryQualityMetricsResponse;
}
