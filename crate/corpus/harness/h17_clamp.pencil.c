void clamp(int n, int lo, int A[const restrict static n])
{
  for (int i = 0; i < n; i++) {
    if (A[i] < lo)
      A[i] = lo;
    else if (A[i] > lo + 3)
      A[i] = lo + 3;
  }
}
