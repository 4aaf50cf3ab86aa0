void region(int n, int lo, int hi, int A[const restrict static n], int B[const restrict static n])
{
  for (int i = lo; i < hi; i++) {
    int acc = 0;
    for (int j = 0; j < i; j++)
      acc += A[j];
    B[i] = acc;
  }
}
