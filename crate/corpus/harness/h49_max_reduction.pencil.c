int peak(int n, int A[const restrict static n])
{
  int m = 0;
#pragma pencil reduction (max:m)
  for (int i = 0; i < n; i++)
    m = fmax(m, A[i]);
  return m;
}
