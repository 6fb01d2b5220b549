"""Graph coarsening and subgraph-level GCN training for fast inference."""

from .graph import (Graph, GraphDataset, GraphFormatError, GraphValidationError,
                    load_graph, load_graph_dataset, save_graph,
                    save_graph_dataset, synth_er, synth_sbm, validate)
from .coarsen import (CoarsenedGraph, PartitionMatrix, build_coarsened_graph,
                      coarse_degree, coarsen_partition, load_partition,
                      ratio_to_clusters, save_partition)
from .subgraphs import (Subgraph, SubgraphSet, augment_cluster_nodes,
                        augment_extra_nodes, build_masks, induce_subgraphs,
                        info_loss_l1, info_loss_l2, locate_subgraph,
                        save_subgraph_dump)
from .gnn import (AdamState, GcnParams, PropagationOperator, TrainConfig,
                  accuracy, adam_step, cross_entropy, default_train_config,
                  forward_opcount, graph_model_gc_forward,
                  graph_model_gs_forward, inference_bytes, init_params,
                  load_params, mae, make_operator, model_dims,
                  node_loss_and_grads, node_model_forward, normalized_mae,
                  save_params, subgraph_loss_and_grads, target_sigma)
from .pipelines import (ExperimentSpec, RunReport, build_structures,
                        infer_full, infer_graph_task, infer_single_node,
                        infer_subgraphs, run_experiment,
                        structures_from_partition, train_full_graph,
                        train_graph_task, train_on_coarse, train_on_gc,
                        train_on_gs)
from .feasibility import (lemma2_check, phi_max_bound, phi_second_bound,
                          ratio_bound, time_diff_T)
from .bench import BenchReport, bench_graph_inference, bench_inference
from .estimators import (GraphClassifierGCN, GraphCoarsener,
                         GraphRegressorGCN, NodeClassifierGCN,
                         NodeRegressorGCN)

__version__ = "0.1.0"
