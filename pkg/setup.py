from setuptools import setup

try:
    VERSIONFILE = "vemd/version.py"
    verstrline = open(VERSIONFILE, "rt").read()
    verstr = verstrline.split('=')[1].replace('\n','').replace("'","")
except:
    verstr='unknown'

##############################################################
setup(
    name='vemd',
    version=verstr,
    packages=['vemd'],
    scripts=['bin/vemd'],
    install_requires=['numpy',
                      'vtk',
                      'torch',
                      'torchvision',
                      'scipy',
                      'scikit-learn',
                      'statsmodels',
                      'matplotlib'],
    package_data={'vemd': ['data/*.json']},
    description='''Group emotion recognition from video with a variational
    encoder and structural-representation decoders.''',
    long_description="""Group emotion recognition from video: a variational encoder
    regularized by limb heatmap or per-person limb decoders, an attention-pooled
    emotion head, late fusion with audio and text features, and an experiment
    harness for ablations and significance tests.""",
    license='MIT',
    keywords='emotion recognition video pose heatmap transformer',
    classifiers=['Intended Audience :: Science/Research',
                'Programming Language :: Python',
                'License :: OSI Approved :: MIT License',
                'Topic :: Scientific/Engineering :: Artificial Intelligence',
                'Topic :: Scientific/Engineering :: Image Recognition',
                'Programming Language :: Python :: 3.8',
                'Programming Language :: Python :: 3.9',
                'Programming Language :: Python :: 3.10'
                ],
    include_package_data=True
)


##############################################################
# # before a release
# change version in vemd/version.py
# remove trailing spaces
# pip install .
# cd tests && ./run_all.sh
# VEMD_SLOW_TESTS=1 pytest tests/test_learning.py

# check the command line script:
# vemd datagen --out-dir /tmp/synth --num-videos 30
# vemd train --config tests/configs/heatmap.json --out-dir /tmp/run

## to generate documentation:
# Install the dependencies in docs/requirements.txt
#  pip install -r docs/requirements.txt
#
# Run the documentaion generation:
#  cd docs
#  make html
# Open the HTML webpage
#  open build/html/index.html
