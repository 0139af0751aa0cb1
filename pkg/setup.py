from setuptools import find_packages, setup

version = "0.1.0"

setup(
    name="metaquant",
    version=version,
    description="Meta-quantized gradients for quantization-aware training",
    long_description="""\
      A small reverse-mode autodiff engine with a symmetric uniform quantizer
      and hypernetworks that learn a correction to the quantized gradient of
      every weight, trained jointly with the base model.
      """,
    classifiers=[],
    keywords="quantization hypernetwork qat",
    license="3-Clause BSD",
    packages=find_packages(exclude=["ez_setup", "examples", "tests"]),
    include_package_data=True,
    zip_safe=True,
    test_suite="tests",
    install_requires=["configobj>=4.6.0", "setuptools", "numpy>=1.20"],
    entry_points="""
      # Scripts generated by setuptools
      [console_scripts]
      metaquant = metaquant.core.cmdshell:main

      # metaquant subcommands
      [metaquant.commands]
      train = metaquant.commands.train:Train
      eval = metaquant.commands.evaluate:Evaluate
      grad-check = metaquant.commands.grad_check:GradCheck
      quantizer-check = metaquant.commands.quantizer_check:QuantizerCheck
      ablation = metaquant.commands.ablation:Ablation
      list-plugins = metaquant.commands.list_plugins:ListPlugins
      mk-config = metaquant.commands.mk_config:MkConfig

      # hypernetwork designs
      [metaquant.hypernet]
      multifc = metaquant.hypernet.multifc:MultiFC
      lstmfc = metaquant.hypernet.lstmfc:LSTMFC
      duallstmfc = metaquant.hypernet.duallstmfc:DualLSTMFC
      """,
)
